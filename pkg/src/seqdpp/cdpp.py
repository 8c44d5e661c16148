"""Probabilities, marginal kernels and training objectives of (conditional) DPPs.

For an L-ensemble with conditioning set A and complement Ā:

    P(Y = A ∪ B | A ⊆ Y) = det(L_{A∪B}) / det(L + I_Ā)
    K^A = I - [(L + I_Ā)^{-1}]_Ā
    MIC = tr(K^A) = E[|B|]
    d MIC / d L = (L + I_Ā)^{-1} I_Ā (L + I_Ā)^{-1}      (transposed)

Singular minors give a ``-inf`` log-probability instead of raising, since
the MLE comparison deliberately walks into near-singular kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedError, InputError
from .kernel import DppKernel, _check_indices

COND_LIMIT = 1e12
NEG_INF = float("-inf")


def _as_kernel(L) -> DppKernel:
    return L if isinstance(L, DppKernel) else DppKernel(L)


def logdet_psd(M: np.ndarray, rtol: float = None) -> float:
    """log det of a symmetric PSD matrix via Cholesky; ``-inf`` when singular.

    A pivot (squared Cholesky diagonal) at or below ``rtol * max(diag(M))``
    counts as singular. The empty matrix has determinant 1.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if n == 0:
        return 0.0
    if rtol is None:
        rtol = 16 * n * np.finfo(float).eps
    scale = float(np.max(np.diag(M)))
    if not scale > 0:
        return NEG_INF
    try:
        C = np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        return NEG_INF
    piv = np.diag(C) ** 2
    if piv.min() <= rtol * scale:
        return NEG_INF
    return float(2.0 * np.log(np.diag(C)).sum())


def _shift(K: DppKernel) -> np.ndarray:
    M = np.array(K.L, dtype=np.float64)
    free = list(K.free)
    M[free, free] += 1.0
    return M


def log_normalizer(L, conditioned: bool = True) -> float:
    """``log det(L + I_Ā)``; with ``conditioned=False`` (or A = ∅) ``log det(L + I)``."""
    K = _as_kernel(L)
    if conditioned:
        M = _shift(K)
    else:
        M = K.L + np.eye(K.n)
    return logdet_psd(M)


def dpp_log_prob(L, Y) -> float:
    """``log det(L_Y) - log det(L + I)`` for the unconditioned process."""
    K = _as_kernel(L)
    Y = _check_indices(Y, K.n, "index")
    return logdet_psd(K.L[np.ix_(Y, Y)]) - log_normalizer(K, conditioned=False)


def conditional_log_prob(L, B) -> float:
    """``log P(Y = A ∪ B | A ⊆ Y) = log det(L_{A∪B}) - log det(L + I_Ā)``."""
    K = _as_kernel(L)
    B = _check_indices(B, K.n, "index")
    clash = set(B) & set(K.cond)
    if clash:
        raise InputError(f"indices {sorted(clash)} are in the conditioning set")
    AB = sorted(set(K.cond) | set(B))
    return logdet_psd(K.L[np.ix_(AB, AB)]) - log_normalizer(K)


@dataclass(frozen=True)
class MarginalKernel:
    """K^A over the free items; ``index[i]`` is the ground-set position of row i."""

    K: np.ndarray
    index: tuple

    @property
    def m(self) -> int:
        return len(self.index)


def _inverse_shifted(K: DppKernel) -> np.ndarray:
    M = _shift(K)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        lam = np.linalg.eigvalsh(0.5 * (M + M.T))
        raise IllConditionedError(
            f"L + I_Abar is ill-conditioned (cond={cond:.3e} > {COND_LIMIT:g})",
            condition_number=cond,
            diagnostics={"min_eig": float(lam.min()), "max_eig": float(lam.max()),
                         "cond_indices": list(K.cond)},
        )
    return np.linalg.inv(M)


def marginal_kernel(L) -> MarginalKernel:
    """Marginal kernel of the process conditioned on ``A ⊆ Y``."""
    K = _as_kernel(L)
    free = list(K.free)
    Minv = _inverse_shifted(K)
    KA = np.eye(len(free)) - Minv[np.ix_(free, free)]
    return MarginalKernel(K=0.5 * (KA + KA.T), index=tuple(free))


def mic_objective(L) -> float:
    """Expected number of free items selected, ``tr(K^A)``."""
    K = _as_kernel(L)
    free = list(K.free)
    Minv = _inverse_shifted(K)
    return float(len(free) - np.trace(Minv[np.ix_(free, free)]))


def mic_value_and_gradient(L):
    K = _as_kernel(L)
    free = list(K.free)
    Minv = _inverse_shifted(K)
    value = float(len(free) - np.trace(Minv[np.ix_(free, free)]))
    G = Minv[:, free] @ Minv[free, :]
    return value, G.T


def mic_gradient(L) -> np.ndarray:
    """``G[i, j] = d tr(K^A) / d L[i, j]`` (entries treated as independent)."""
    return mic_value_and_gradient(L)[1]


def mle_objective(L, Y=None, conditioned: bool = True) -> float:
    """Log-likelihood of the observed set ``Y`` (default: the whole ground set).

    With a non-empty conditioning set and ``conditioned=True`` this is
    ``log det(L_{Y∪A}) - log det(L + I_Ā)``; otherwise it is
    ``dpp_log_prob(L, Y)``. Singular ``L_Y`` gives ``-inf``.
    """
    K = _as_kernel(L)
    Y = list(range(K.n)) if Y is None else _check_indices(Y, K.n, "index")
    if conditioned and K.cond:
        YA = sorted(set(Y) | set(K.cond))
        return logdet_psd(K.L[np.ix_(YA, YA)]) - log_normalizer(K)
    return dpp_log_prob(K, Y)


def mle_value_and_gradient(L, Y=None, conditioned: bool = True):
    """MLE objective and its gradient w.r.t. L; the gradient is all-NaN
    when the objective is ``-inf``."""
    K = _as_kernel(L)
    Y = list(range(K.n)) if Y is None else _check_indices(Y, K.n, "index")
    if conditioned and K.cond:
        Y = sorted(set(Y) | set(K.cond))
        M = _shift(K)
    else:
        M = K.L + np.eye(K.n)
    value = logdet_psd(K.L[np.ix_(Y, Y)]) - logdet_psd(M)
    if not np.isfinite(value):
        return value, np.full((K.n, K.n), np.nan)
    G = -np.linalg.inv(M).T
    G[np.ix_(Y, Y)] += np.linalg.inv(K.L[np.ix_(Y, Y)]).T
    return value, G


def mic_gradient_bound(L) -> float:
    """``|Ā| * max(1, 1 / lambda_min(L + I_Ā))**2``, an upper bound on ``||mic_gradient||_F``."""
    K = _as_kernel(L)
    M = _shift(K)
    lam = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
    return len(K.free) * max(1.0, 1.0 / lam) ** 2 if lam > 0 else float("inf")


def conditional_kernel(L) -> np.ndarray:
    """L-ensemble kernel of the free items given ``A ⊆ Y``.

    This is the Schur complement ``L_Ā - L_ĀA L_A^{-1} L_AĀ``, so that
    ``det(L_{A∪B}) = det(L_A) det(conditional_kernel_B)``.
    """
    K = _as_kernel(L)
    free, cond = list(K.free), list(K.cond)
    if not cond:
        return np.array(K.L)
    LA = K.L[np.ix_(cond, cond)]
    if not np.isfinite(logdet_psd(LA)):
        raise IllConditionedError("conditioning block L_A is singular")
    X = np.linalg.solve(LA, K.L[np.ix_(cond, free)])
    out = K.L[np.ix_(free, free)] - K.L[np.ix_(free, cond)] @ X
    return 0.5 * (out + out.T)
