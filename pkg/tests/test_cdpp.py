import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqdpp import cdpp
from seqdpp.errors import IllConditionedError, InputError
from seqdpp.kernel import DppKernel

from oracles import central_diff, det_minor, enum_conditional, random_psd, rel_err, subsets


def test_logdet_psd():
    assert cdpp.logdet_psd(np.zeros((0, 0))) == 0.0
    assert cdpp.logdet_psd(np.diag([2.0, 3.0])) == pytest.approx(np.log(6))
    assert cdpp.logdet_psd(np.ones((2, 2))) == -np.inf
    assert cdpp.logdet_psd(np.zeros((2, 2))) == -np.inf
    assert cdpp.logdet_psd(np.array([[1.0, 2.0], [2.0, 1.0]])) == -np.inf


def test_dpp_log_prob_examples():
    assert cdpp.dpp_log_prob(np.eye(2), [0]) == pytest.approx(-np.log(4), abs=1e-15)
    L = random_psd(np.random.default_rng(0), 3)
    assert cdpp.dpp_log_prob(L, []) == pytest.approx(-np.log(np.linalg.det(L + np.eye(3))))


@pytest.mark.parametrize("seed", range(5))
def test_dpp_sums_to_one(seed):
    L = random_psd(np.random.default_rng(seed), 4)
    total = sum(np.exp(cdpp.dpp_log_prob(L, Y)) for Y in subsets(range(4)))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_conditional_reduces_when_unconditioned():
    L = random_psd(np.random.default_rng(1), 4)
    for B in subsets(range(4)):
        assert cdpp.conditional_log_prob(L, B) == cdpp.dpp_log_prob(L, B)


@pytest.mark.parametrize("seed", range(5))
def test_conditional_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    K = DppKernel(random_psd(rng, 6), (1, 4))
    total = sum(np.exp(cdpp.conditional_log_prob(K, B)) for B in subsets(K.free))
    assert total == pytest.approx(1.0, abs=1e-8)


def test_conditional_empty_b():
    rng = np.random.default_rng(2)
    L = random_psd(rng, 5)
    K = DppKernel(L, (0, 3))
    M = L.copy()
    M[[1, 2, 4], [1, 2, 4]] += 1
    expected = np.log(det_minor(L, [0, 3])) - np.log(np.linalg.det(M))
    assert cdpp.conditional_log_prob(K, []) == pytest.approx(expected, rel=1e-12)


def test_conditional_rejects_overlap():
    with pytest.raises(InputError):
        cdpp.conditional_log_prob(DppKernel(np.eye(3), (0,)), [0, 1])


def test_marginal_kernel_diagonal():
    lam = np.array([0.5, 2.0, 7.0])
    MK = cdpp.marginal_kernel(np.diag(lam))
    np.testing.assert_allclose(MK.K, np.diag(lam / (1 + lam)), atol=1e-15)
    np.testing.assert_array_equal(cdpp.marginal_kernel(np.zeros((3, 3))).K, np.zeros((3, 3)))


def test_marginal_kernel_inclusion_probabilities():
    rng = np.random.default_rng(3)
    for n, A in [(2, (0,)), (5, (1, 2)), (6, ())]:
        K = DppKernel(random_psd(rng, n), A)
        MK = cdpp.marginal_kernel(K)
        probs = enum_conditional(K.L, A)
        for r, i in enumerate(MK.index):
            assert MK.K[r, r] == pytest.approx(sum(p for B, p in probs.items() if i in B), abs=1e-10)
        # pair inclusion: det of the 2x2 block
        if MK.m >= 2:
            i, j = MK.index[:2]
            pij = sum(p for B, p in probs.items() if i in B and j in B)
            assert np.linalg.det(MK.K[:2, :2]) == pytest.approx(pij, abs=1e-10)
        lam = np.linalg.eigvalsh(MK.K)
        assert lam.min() >= -1e-8 and lam.max() <= 1 + 1e-8


def test_mic_examples():
    for n in (1, 3, 7):
        assert cdpp.mic_objective(np.eye(n)) == pytest.approx(n / 2)
    assert cdpp.mic_objective(np.array([[3.0]])) == pytest.approx(0.75)


@pytest.mark.parametrize("seed", range(4))
def test_mic_is_expected_cardinality(seed):
    rng = np.random.default_rng(seed)
    K = DppKernel(random_psd(rng, 8), (2, 5))
    probs = enum_conditional(K.L, K.cond)
    expected = sum(len(B) * p for B, p in probs.items())
    assert cdpp.mic_objective(K) == pytest.approx(expected, abs=1e-8)


def _fd_mic(K, eps=1e-5):
    def f(flat):
        return cdpp.mic_objective(DppKernel(flat.reshape(K.n, K.n), K.cond))
    return central_diff(f, K.L.ravel(), eps).reshape(K.n, K.n)


@pytest.mark.parametrize("seed", range(4))
def test_mic_gradient_fd(seed):
    rng = np.random.default_rng(seed)
    K = DppKernel(random_psd(rng, 6), (0, 3))
    G = cdpp.mic_gradient(K)
    assert rel_err(G, _fd_mic(K), floor=1e-7).max() <= 1e-4


def test_mic_gradient_diagonal_and_symmetric():
    lam = np.array([0.2, 1.0, 4.0])
    np.testing.assert_allclose(cdpp.mic_gradient(np.diag(lam)), np.diag(1 / (1 + lam) ** 2), atol=1e-15)
    K = DppKernel(random_psd(np.random.default_rng(9), 5), (1,))
    G = cdpp.mic_gradient(K)
    np.testing.assert_allclose(G, G.T, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 7))
def test_mic_gradient_within_bound(seed, n):
    rng = np.random.default_rng(seed)
    A = tuple(sorted(rng.choice(n, size=int(rng.integers(0, n)), replace=False).tolist()))
    K = DppKernel(random_psd(rng, n, rank=int(rng.integers(max(1, len(A)), n + 1))), A)
    value, G = cdpp.mic_value_and_gradient(K)
    assert -1e-9 <= value <= len(K.free) + 1e-9
    assert np.linalg.norm(G) <= cdpp.mic_gradient_bound(K) * (1 + 1e-9)


def test_ill_conditioned_raises_with_diagnostics():
    L = np.diag([1e14, -1 + 1e-14])  # L + I has a vanishing eigenvalue
    with pytest.raises(IllConditionedError) as info:
        cdpp.mic_objective(L)
    assert info.value.condition_number > cdpp.COND_LIMIT


def test_mle_duplicates_are_neg_inf():
    L = np.ones((2, 2))
    assert cdpp.mle_objective(L, [0, 1]) == -np.inf
    v, G = cdpp.mle_value_and_gradient(L, [0, 1])
    assert v == -np.inf and np.all(np.isnan(G))


def test_mle_near_duplicate_value():
    s = 1 - 1e-8
    L = np.array([[1.0, s], [s, 1.0]])
    ld = cdpp.logdet_psd(L)
    assert ld == pytest.approx(np.log(2e-8 - 1e-16), rel=1e-7)
    assert cdpp.mle_objective(L) == pytest.approx(ld - np.log(np.linalg.det(L + np.eye(2))), rel=1e-7)


def test_mle_full_set_negative():
    rng = np.random.default_rng(5)
    for _ in range(10):
        assert cdpp.mle_objective(random_psd(rng, 4)) < 0


@pytest.mark.parametrize("cond", [(), (1,), (0, 3)])
def test_mle_gradient_fd(cond):
    rng = np.random.default_rng(6)
    K = DppKernel(random_psd(rng, 5), cond)
    Y = [2, 4]
    _, G = cdpp.mle_value_and_gradient(K, Y)

    def f(flat):
        return cdpp.mle_objective(DppKernel(flat.reshape(5, 5), cond), Y)

    fd = central_diff(f, K.L.ravel(), 1e-6).reshape(5, 5)
    assert rel_err(G, fd, floor=1e-6).max() < 1e-5


def test_conditional_kernel_schur_identity():
    rng = np.random.default_rng(7)
    K = DppKernel(random_psd(rng, 6), (1, 2))
    C = cdpp.conditional_kernel(K)
    free = list(K.free)
    dA = det_minor(K.L, K.cond)
    for B in subsets(range(len(free))):
        ground = sorted(set(K.cond) | {free[b] for b in B})
        assert dA * det_minor(C, B) == pytest.approx(det_minor(K.L, ground), rel=1e-9)
