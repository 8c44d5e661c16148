"""Exact samplers and singleton MAP inference for (conditional) DPPs.

Randomness comes from numpy's PCG64 bit generator seeded through a
``SeedSequence``; an optional ``stream`` id gives independent streams for
concurrent sampling with the same base seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .cdpp import _as_kernel, conditional_kernel, logdet_psd, marginal_kernel
from .errors import DegenerateCandidatesError, InputError, NotPSDError
from .kernel import PSD_TOL

RANK_TOL = 1e-12


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    k: Optional[int] = None
    stream: int = 0

    def rng(self) -> np.random.Generator:
        return make_rng(self.seed, self.stream)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise InputError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, int(stream)])))


def _rng(cfg) -> np.random.Generator:
    if isinstance(cfg, np.random.Generator):
        return cfg
    if isinstance(cfg, SamplerConfig):
        return cfg.rng()
    if cfg is None:
        return make_rng(0)
    return make_rng(cfg)


def _eigh_psd(L: np.ndarray):
    lam, V = np.linalg.eigh(0.5 * (L + L.T))
    if lam.size and lam.min() < -PSD_TOL * max(1.0, abs(lam.max())):
        raise NotPSDError(f"kernel not PSD: min eigenvalue {lam.min():.3e}")
    return np.clip(lam, 0.0, None), V


@njit(cache=True)
def _projection_loop(V, us):
    V = V.copy()
    n, r = V.shape
    out = np.empty(r, dtype=np.int64)
    for step in range(us.shape[0]):
        total = 0.0
        cum = np.empty(n)
        for i in range(n):
            p = 0.0
            for c in range(r):
                p += V[i, c] * V[i, c]
            total += p
            cum[i] = total
        target = us[step] * total
        i = 0
        while i < n - 1 and cum[i] <= target:
            i += 1
        out[step] = i
        j = 0
        for c in range(1, r):
            if abs(V[i, c]) > abs(V[i, j]):
                j = c
        # eliminate item i from the span, drop column j
        piv = V[i, j]
        for c in range(r):
            if c != j:
                f = V[i, c] / piv
                for a in range(n):
                    V[a, c] -= f * V[a, j]
        for a in range(n):
            V[a, j] = V[a, r - 1]
        r -= 1
        # re-orthonormalise the remaining columns (two passes of Gram-Schmidt)
        for _ in range(2):
            for c in range(r):
                for b in range(c):
                    d = 0.0
                    for a in range(n):
                        d += V[a, b] * V[a, c]
                    for a in range(n):
                        V[a, c] -= d * V[a, b]
                nrm = 0.0
                for a in range(n):
                    nrm += V[a, c] * V[a, c]
                nrm = np.sqrt(nrm)
                for a in range(n):
                    V[a, c] /= nrm
    return np.sort(out)


def _sample_projection(V: np.ndarray, rng: np.random.Generator) -> list[int]:
    """Sample from the projection DPP spanned by the orthonormal columns of V."""
    V = np.ascontiguousarray(V, dtype=np.float64)
    us = rng.random(V.shape[1])
    return [int(i) for i in _projection_loop(V, us)]


def dpp_sample(L, cfg=None) -> list[int]:
    """Draw Y ~ DPP(L) with the spectral (eigenvector-selection) sampler.

    Any conditioning set on the kernel is ignored; use
    ``conditional_sample`` for the conditioned process.
    """
    K = _as_kernel(L)
    return _dpp_draw(*_eigh_psd(K.L), _rng(cfg))


def _dpp_draw(lam, V, rng):
    keep = rng.random(lam.shape[0]) < lam / (1.0 + lam)
    return _sample_projection(V[:, keep], rng)


def elementary_symmetric(lam: np.ndarray, k: int) -> np.ndarray:
    """E[l, m] = e_l(lam[:m]) for l <= k, m <= len(lam)."""
    N = len(lam)
    E = np.zeros((k + 1, N + 1))
    E[0, :] = 1.0
    for l in range(1, k + 1):
        for m in range(1, N + 1):
            E[l, m] = E[l, m - 1] + lam[m - 1] * E[l - 1, m - 1]
    return E


def _kdpp_setup(L: np.ndarray, k: int):
    lam, V = _eigh_psd(L)
    rank = int((lam > RANK_TOL).sum())
    if k < 0 or k > rank:
        raise InputError(f"k={k} exceeds numerical rank {rank} of the kernel")
    if k == 0:
        return lam, V, k, None
    # k-DPPs are invariant to kernel scale; normalising avoids overflow in E.
    lam = lam / lam.max()
    return lam, V, k, elementary_symmetric(lam, k)


def _kdpp_from_matrix(L: np.ndarray, k: int, rng) -> list[int]:
    return _kdpp_draw(*_kdpp_setup(L, k), rng)


def _kdpp_draw(lam, V, k, E, rng) -> list[int]:
    if k == 0:
        return []
    chosen = []
    rem = k
    for m in range(len(lam), 0, -1):
        if rem == 0:
            break
        if m == rem:
            marg = 1.0
        else:
            marg = lam[m - 1] * E[rem - 1, m - 1] / E[rem, m]
        if rng.random() < marg:
            chosen.append(m - 1)
            rem -= 1
    return _sample_projection(V[:, chosen], rng)


def kdpp_sample(L, k: int = None, cfg=None, conditioned: bool = False) -> list[int]:
    """Draw a size-``k`` subset with P(Y) ∝ det(L_Y).

    With ``conditioned=True`` the draw is over the free items given the
    kernel's conditioning set, P(B) ∝ det(L_{A∪B}); returned indices are
    ground-set positions in either case.
    """
    K = _as_kernel(L)
    if k is None:
        if isinstance(cfg, SamplerConfig) and cfg.k is not None:
            k = cfg.k
        else:
            raise InputError("kdpp_sample needs k")
    rng = _rng(cfg)
    if conditioned and K.cond:
        free = K.free
        local = _kdpp_from_matrix(conditional_kernel(K), int(k), rng)
        return sorted(free[i] for i in local)
    return _kdpp_from_matrix(K.L, int(k), rng)


@njit(cache=True)
def _bernoulli_chain(K, us):
    K = K.copy()
    m = K.shape[0]
    take = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        p = min(max(K[i, i], 0.0), 1.0)
        take[i] = us[i] < p
        if take[i]:
            d = K[i, i] if p > 0 else 0.0
        else:
            d = K[i, i] - 1.0 if p < 1 else 0.0
        if d != 0.0:
            for a in range(i + 1, m):
                f = K[a, i] / d
                for b in range(i + 1, m):
                    K[a, b] -= f * K[i, b]
    return take


def sample_from_marginal(Kmat: np.ndarray, rng) -> list[int]:
    """Sequential Bernoulli-chain sampler for a marginal kernel K (0 <= K <= I).

    Items are visited in order; each inclusion decision is followed by the
    matching rank-one Schur update of the remaining block.
    """
    K = np.ascontiguousarray(Kmat, dtype=np.float64)
    take = _bernoulli_chain(K, rng.random(K.shape[0]))
    return [int(i) for i in np.flatnonzero(take)]


def conditional_sample(L, cfg=None) -> list[int]:
    """Draw B ⊆ Ā from the process conditioned on the kernel's set A."""
    return _cond_draw(_cond_setup(L), _rng(cfg))


def _cond_setup(L):
    MK = marginal_kernel(_as_kernel(L))
    lam = np.linalg.eigvalsh(MK.K) if MK.m else np.zeros(0)
    if lam.size and (lam.min() < -PSD_TOL or lam.max() > 1 + PSD_TOL):
        raise NotPSDError(f"marginal kernel spectrum [{lam.min():.3e}, {lam.max():.3e}] outside [0, 1]")
    return MK


def _cond_draw(MK, rng):
    return sorted(MK.index[i] for i in sample_from_marginal(MK.K, rng))


def sample_many(L, n_draws: int, mode: str = "dpp", k: int = None, cfg=None,
                conditioned: bool = True) -> list[list[int]]:
    """``n_draws`` subsets from one kernel, sharing the spectral set-up.

    ``mode`` is ``"dpp"``, ``"kdpp"`` or ``"cond"``. The draws equal those
    of repeated single-draw calls on the same generator.
    """
    K = _as_kernel(L)
    rng = _rng(cfg)
    if n_draws < 0:
        raise InputError("n_draws must be >= 0")
    if mode == "dpp":
        lam, V = _eigh_psd(K.L)
        return [_dpp_draw(lam, V, rng) for _ in range(n_draws)]
    if mode == "kdpp":
        if k is None:
            raise InputError("kdpp mode needs k")
        if conditioned and K.cond:
            free = K.free
            setup = _kdpp_setup(conditional_kernel(K), int(k))
            return [sorted(free[i] for i in _kdpp_draw(*setup, rng)) for _ in range(n_draws)]
        setup = _kdpp_setup(K.L, int(k))
        return [_kdpp_draw(*setup, rng) for _ in range(n_draws)]
    if mode == "cond":
        MK = _cond_setup(K)
        return [_cond_draw(MK, rng) for _ in range(n_draws)]
    raise InputError(f"unknown sampling mode {mode!r}")


def map_scores(L) -> np.ndarray:
    """``log det(L_{{x} ∪ A})`` for every ground index (``-inf`` on A itself)."""
    K = _as_kernel(L)
    free, cond = list(K.free), list(K.cond)
    scores = np.full(K.n, -np.inf)
    if not free:
        return scores
    diag = np.diag(K.L)[free]
    if cond:
        LA = K.L[np.ix_(cond, cond)]
        base = logdet_psd(LA)
        if not np.isfinite(base):
            return scores
        C = np.linalg.cholesky(0.5 * (LA + LA.T))
        X = np.linalg.solve(C, K.L[np.ix_(cond, free)])
        schur = diag - (X ** 2).sum(axis=0)
    else:
        base = 0.0
        schur = diag.copy()
    rtol = 16 * (len(cond) + 1) * np.finfo(float).eps
    ok = schur > rtol * np.maximum(diag, np.finfo(float).tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(ok, base + np.log(np.where(ok, schur, 1.0)), -np.inf)
    scores[free] = vals
    return scores


def map_single(L) -> int:
    """Best single free item to add to A: ``argmax_x log det(L_{{x} ∪ A})``.

    Ties go to the lowest index.
    """
    K = _as_kernel(L)
    if not K.free:
        raise InputError("no free items to choose from")
    scores = map_scores(K)
    if not np.any(np.isfinite(scores)):
        raise DegenerateCandidatesError("every candidate minor det(L_{x ∪ A}) is singular")
    return int(np.argmax(scores))
