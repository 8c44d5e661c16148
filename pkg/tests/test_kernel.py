import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqdpp.errors import InputError, NotPSDError
from seqdpp.kernel import DppKernel, QualityVector, build_kernel, quality_score, quality_score_grad
from seqdpp.sequences import similarity_matrix

from oracles import central_diff


def test_quality_examples():
    assert quality_score(3.7, w=10, k=3.7) == 10.0
    assert quality_score(2.0, w=10, k=3.0) == pytest.approx(10 * np.e ** -1, rel=1e-15)
    assert quality_score(5.0, w=2, k=0.0) == 2.0


def test_quality_vectorised():
    q = quality_score(np.array([-1.0, 0.0, 1.0]), w=4, k=0.0)
    np.testing.assert_allclose(q, [4 / np.e, 4, 4])


@pytest.mark.parametrize("w", [0.0, -1.0, np.nan, np.inf])
def test_quality_rejects_weight(w):
    with pytest.raises(InputError):
        quality_score(0.0, w=w)


def test_quality_rejects_nonfinite_density():
    with pytest.raises(InputError):
        quality_score(np.nan)


@settings(max_examples=100, deadline=None)
@given(st.floats(-30, 30), st.floats(0.01, 100), st.floats(-10, 10))
def test_quality_in_range(pi, w, k):
    q = quality_score(pi, w, k)
    assert 0 < q <= w


@pytest.mark.parametrize("pi", [-3.0, -0.5, 0.4, 2.0])
def test_quality_grad_matches_fd(pi):
    fd = central_diff(lambda x: quality_score(float(x[0]), 7.0, 0.0), [pi], 1e-6)[0]
    assert quality_score_grad(pi, 7.0, 0.0) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_quality_grad_at_threshold_uses_lower_branch():
    assert quality_score_grad(1.0, 3.0, 1.0) == 3.0


def test_quality_vector_checks():
    QualityVector([1.0, 10.0], w=10)
    with pytest.raises(InputError):
        QualityVector([0.0, 1.0], w=10)
    with pytest.raises(InputError):
        QualityVector([11.0], w=10)
    qv = QualityVector.from_log_density([-1.0, 2.0], w=5, k=0.0)
    np.testing.assert_allclose(qv.values, [5 / np.e, 5])


def test_build_kernel_identity_quality():
    S = similarity_matrix([[0.0, 1.0], [0.5], [2.0, 2.0, 1.0]], 1.0)
    K = build_kernel(S, np.ones(3))
    np.testing.assert_array_equal(K.L, S.entries)


def test_build_kernel_hand_example():
    K = build_kernel(np.array([[1.0, 0.5], [0.5, 1.0]]), [2.0, 3.0])
    np.testing.assert_array_equal(K.L, [[4.0, 3.0], [3.0, 9.0]])
    assert np.linalg.det(K.L) == pytest.approx(27.0, rel=1e-14)
    assert 27.0 == 4 * 9 * (1 - 0.25)


def test_pair_determinant_identity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = rng.uniform(0.1, 10, size=2)
        s = rng.uniform(0, 1)
        K = build_kernel(np.array([[1, s], [s, 1]]), q)
        assert np.linalg.det(K.L) == pytest.approx(q[0] ** 2 * q[1] ** 2 * (1 - s * s), rel=1e-10)


def test_kernel_reconstructs_from_parts():
    rng = np.random.default_rng(1)
    seqs = [rng.normal(size=t) for t in (3, 4, 5, 2)]
    S = similarity_matrix(seqs, 1.0)
    q = rng.uniform(0.5, 10, size=4)
    K = build_kernel(S, QualityVector(q, w=10), cond_indices=[2, 0])
    assert K.cond == (0, 2) and K.free == (1, 3)
    np.testing.assert_allclose(K.L, np.outer(K.q, K.q) * K.S, rtol=1e-12)
    assert np.abs(K.L - K.L.T).max() == 0
    assert K.check_psd() >= -1e-8
    assert K.w == 10


@pytest.mark.parametrize("cond", [[3], [-1], [0, 0], [0.5], [True]])
def test_bad_cond_indices(cond):
    with pytest.raises(InputError):
        DppKernel(np.eye(3), tuple(cond))


def test_shape_errors():
    with pytest.raises(InputError):
        build_kernel(np.eye(3), [1.0, 2.0])
    with pytest.raises(InputError):
        DppKernel(np.ones((2, 3)))
    with pytest.raises(InputError):
        DppKernel([[np.nan]])


def test_check_psd_raises():
    K = DppKernel(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotPSDError):
        K.check_psd()


def test_json_round_trip_is_exact():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(5, 5))
    K = build_kernel(np.corrcoef(X), rng.uniform(0.1, 3, 5), [1, 4])
    back = DppKernel.from_json(json.loads(json.dumps(K.to_json())))
    np.testing.assert_array_equal(back.L, K.L)
    np.testing.assert_array_equal(back.q, K.q)
    assert back.cond == K.cond


def test_from_json_needs_L():
    with pytest.raises(InputError):
        DppKernel.from_json({"cond_indices": []})
