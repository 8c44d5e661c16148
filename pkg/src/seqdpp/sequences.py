"""Variable-length feature sequences, soft-DTW and similarity matrices.

Soft-DTW follows the Cuturi & Blondel (2017) recursion

    r[i, j] = D(a_i, b_j) + softmin_gamma(r[i-1, j], r[i, j-1], r[i-1, j-1])

with ``softmin_gamma(v) = -gamma * log(sum(exp(-v / gamma)))``, r[0, 0] = 0
and +inf on the remaining boundary cells. The frame metric D is the L1
distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import InputError

# Stand-in for +inf on the DP boundary; exp(-(BIG - v) / gamma) underflows to 0.
BIG = 1e30
# Lower clamp for similarity entries.
S_FLOOR = 1e-300


@dataclass(frozen=True)
class FeatureSequence:
    """A sequence of ``T >= 1`` frames, each a real vector of dimension ``d``."""

    frames: np.ndarray
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "frames", as_frames(self.frames))

    def __len__(self):
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def as_frames(x) -> np.ndarray:
    """Coerce ``x`` to a finite float64 array of shape (T, d).

    1-D input is read as a scalar contour (d = 1).
    """
    if isinstance(x, FeatureSequence):
        return x.frames
    arr = np.array(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError(f"frames must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError("a sequence needs at least one frame of dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise InputError("frames contain non-finite values")
    arr.setflags(write=False)
    return arr


def _check_pair(a, b):
    a = as_frames(a)
    b = as_frames(b)
    if a.shape[1] != b.shape[1]:
        raise InputError(f"frame dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def _check_gamma(gamma):
    gamma = float(gamma)
    if not (np.isfinite(gamma) and gamma > 0):
        raise InputError(f"gamma must be a positive finite number, got {gamma}")
    return gamma


def frame_metric_l1(x, y) -> float:
    """``sum_i |x_i - y_i|`` for two frames of equal dimension."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("frames contain non-finite values")
    return float(np.abs(x - y).sum())


def cost_matrix(a, b) -> np.ndarray:
    """Pairwise L1 frame costs, shape (len(a), len(b))."""
    a, b = _check_pair(a, b)
    return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=-1)


@njit(cache=True)
def _forward(C, gamma):
    n, m = C.shape
    R = np.full((n + 2, m + 2), BIG)
    R[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            r0 = R[i - 1, j - 1]
            r1 = R[i - 1, j]
            r2 = R[i, j - 1]
            rmin = min(r0, min(r1, r2))
            s = (np.exp(-(r0 - rmin) / gamma) + np.exp(-(r1 - rmin) / gamma)
                 + np.exp(-(r2 - rmin) / gamma))
            R[i, j] = C[i - 1, j - 1] + rmin - gamma * np.log(s)
    return R


@njit(cache=True)
def _alignment(C, R, gamma):
    """Expected alignment matrix E = d r[n, m] / d C (soft-DTW backward)."""
    n, m = C.shape
    Rb = R.copy()
    for j in range(m + 2):
        Rb[n + 1, j] = -np.inf
    for i in range(n + 2):
        Rb[i, m + 1] = -np.inf
    Rb[n + 1, m + 1] = R[n, m]
    Cp = np.zeros((n + 2, m + 2))
    Cp[1:n + 1, 1:m + 1] = C
    E = np.zeros((n + 2, m + 2))
    E[n + 1, m + 1] = 1.0
    for i in range(n, 0, -1):
        for j in range(m, 0, -1):
            a = np.exp((Rb[i + 1, j] - Rb[i, j] - Cp[i + 1, j]) / gamma)
            b = np.exp((Rb[i, j + 1] - Rb[i, j] - Cp[i, j + 1]) / gamma)
            c = np.exp((Rb[i + 1, j + 1] - Rb[i, j] - Cp[i + 1, j + 1]) / gamma)
            E[i, j] = a * E[i + 1, j] + b * E[i, j + 1] + c * E[i + 1, j + 1]
    return E[1:n + 1, 1:m + 1]


def soft_dtw(a, b, gamma: float = 1.0) -> float:
    """Soft-DTW discrepancy between two sequences under the L1 frame metric."""
    a, b = _check_pair(a, b)
    gamma = _check_gamma(gamma)
    R = _forward(cost_matrix(a, b), gamma)
    return float(R[a.shape[0], b.shape[0]])


def soft_dtw_alignment(a, b, gamma: float = 1.0):
    """Return ``(value, E)`` where E[i, j] = d soft_dtw / d D(a_i, b_j)."""
    a, b = _check_pair(a, b)
    gamma = _check_gamma(gamma)
    C = cost_matrix(a, b)
    R = _forward(C, gamma)
    return float(R[a.shape[0], b.shape[0]]), _alignment(C, R, gamma)


def soft_dtw_backward(a, b, gamma: float = 1.0) -> np.ndarray:
    """Gradient of ``soft_dtw(a, b, gamma)`` with respect to the frames of ``a``.

    Returns an array shaped like ``a``'s frames. The L1 subgradient at exact
    ties is taken as 0.
    """
    return _value_and_grad(a, b, gamma)[1]


def _value_and_grad(a, b, gamma):
    a, b = _check_pair(a, b)
    value, E = soft_dtw_alignment(a, b, gamma)
    sign = np.sign(a[:, None, :] - b[None, :, :])
    return value, np.einsum("ij,ijd->id", E, sign)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Pairwise similarities of a list of sequences.

    ``discrepancy`` holds the raw soft-DTW values the entries were derived
    from (its diagonal is the self-discrepancy of each sequence).
    """

    entries: np.ndarray
    gamma: float
    normalized: bool = True
    discrepancy: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def _as_sequences(seqs: Iterable) -> list[np.ndarray]:
    arrs = [as_frames(s) for s in seqs]
    if not arrs:
        raise InputError("need at least one sequence")
    dims = {a.shape[1] for a in arrs}
    if len(dims) != 1:
        raise InputError(f"inconsistent frame dimensions: {sorted(dims)}")
    return arrs


def discrepancy_matrix(seqs: Sequence, gamma: float = 1.0) -> np.ndarray:
    """Symmetric matrix of soft-DTW values, diagonal included."""
    arrs = _as_sequences(seqs)
    gamma = _check_gamma(gamma)
    n = len(arrs)
    R = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            R[i, j] = R[j, i] = soft_dtw(arrs[i], arrs[j], gamma)
    return R


def _entries(R, normalized):
    if normalized:
        d = np.diag(R)
        expo = -(R - 0.5 * (d[:, None] + d[None, :]))
    else:
        expo = -R
    S = np.exp(np.minimum(expo, 0.0))
    active = (expo < 0.0) & (S > S_FLOOR)
    S = np.clip(S, S_FLOOR, 1.0)
    np.fill_diagonal(S, 1.0)
    np.fill_diagonal(active, False)
    return S, active


def similarity_matrix(seqs: Sequence, gamma: float = 1.0, normalized: bool = True) -> SimilarityMatrix:
    """Soft-DTW similarity ``S_ij = exp(-dtw_gamma(d_i, d_j))``.

    With ``normalized=True`` (default) the self-discrepancies are removed
    first, ``S_ij = exp(-(r_ij - r_ii / 2 - r_jj / 2))``, which is the
    cosine-normalised global alignment kernel: unit diagonal, entries in
    (0, 1], PSD. With ``normalized=False`` the raw exponent is used and the
    diagonal is forced to 1; at gamma near 1 that variant is typically
    indefinite.

    Entries are clamped to ``[1e-300, 1]`` in both modes.
    """
    R = discrepancy_matrix(seqs, gamma)
    S, _ = _entries(R, normalized)
    R.setflags(write=False)
    S.setflags(write=False)
    return SimilarityMatrix(entries=S, gamma=float(gamma), normalized=normalized, discrepancy=R)


def similarity_vjp(seqs: Sequence, gamma: float, upstream, normalized: bool = True) -> list[np.ndarray]:
    """Pull an upstream gradient on S back to the sequence frames.

    ``upstream[i, j]`` is d(objective)/d(S_ij) treating every ordered entry as
    free; the symmetric dependence S_ij = S_ji is accounted for here. Returns
    one frame-shaped gradient per sequence. Clamped entries (and the fixed
    unit diagonal) contribute nothing.
    """
    arrs = _as_sequences(seqs)
    gamma = _check_gamma(gamma)
    U = np.asarray(upstream, dtype=np.float64)
    n = len(arrs)
    if U.shape != (n, n):
        raise InputError(f"upstream gradient shape {U.shape} != ({n}, {n})")
    U = U + U.T

    R = np.empty((n, n))
    # grad[i][j] = d r(d_i, d_j) / d d_i
    grad = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            R[i, j], grad[i][j] = _value_and_grad(arrs[i], arrs[j], gamma)
    R = np.triu(R) + np.triu(R, 1).T
    S, active = _entries(R, normalized)

    out = []
    for i in range(n):
        g = np.zeros_like(arrs[i])
        for j in range(n):
            if j == i or not active[i, j]:
                continue
            dexpo = grad[i][j] - grad[i][i] if normalized else grad[i][j]
            g -= U[i, j] * S[i, j] * dexpo
        out.append(g)
    return out
