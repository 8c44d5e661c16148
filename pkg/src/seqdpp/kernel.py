"""Quality scores and quality-weighted DPP kernels ``L = diag(q) S diag(q)``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InputError, NotPSDError
from .sequences import SimilarityMatrix

PSD_TOL = 1e-8


def _check_weight(w):
    w = float(w)
    if not (np.isfinite(w) and w > 0):
        raise InputError(f"quality weight must be positive, got {w}")
    return w


def quality_score(log_density, w: float = 10.0, k: float = 0.0):
    """Thresholded quality: ``w`` above the log-density threshold ``k``,
    ``w * exp(log_density - k)`` below it. Vectorised over ``log_density``."""
    w = _check_weight(w)
    pi = np.asarray(log_density, dtype=np.float64)
    if not np.all(np.isfinite(pi)) or not np.isfinite(k):
        raise InputError("log-density and threshold must be finite")
    q = w * np.exp(np.minimum(pi - k, 0.0))
    return float(q) if q.ndim == 0 else q


def quality_score_grad(log_density, w: float = 10.0, k: float = 0.0):
    """d quality / d log_density.

    Zero strictly above the threshold; at ``log_density == k`` the
    lower-branch value ``w`` is used.
    """
    w = _check_weight(w)
    pi = np.asarray(log_density, dtype=np.float64)
    g = np.where(pi > k, 0.0, w * np.exp(np.minimum(pi - k, 0.0)))
    return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class QualityVector:
    values: np.ndarray
    w: float = 10.0
    k: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if np.any(v <= 0) or np.any(v > self.w * (1 + 1e-12)) or not np.all(np.isfinite(v)):
            raise InputError("qualities must lie in (0, w]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_log_density(cls, log_density, w=10.0, k=0.0):
        return cls(np.atleast_1d(quality_score(log_density, w, k)), w=float(w), k=float(k))

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class DppKernel:
    """An L-ensemble with a conditioning partition.

    ``cond`` holds the conditioned index set A (sorted); ``free`` is its
    complement. ``S`` and ``q`` are the parts L was built from, when known.
    """

    L: np.ndarray
    cond: tuple = ()
    S: np.ndarray = field(default=None, repr=False)
    q: np.ndarray = field(default=None, repr=False)
    w: float = None
    k: float = None

    def __post_init__(self):
        L = np.array(self.L, dtype=np.float64)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise InputError(f"kernel must be square, got shape {L.shape}")
        if not np.all(np.isfinite(L)):
            raise InputError("kernel has non-finite entries")
        cond = _check_indices(self.cond, L.shape[0], "conditioning index")
        L.setflags(write=False)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "cond", tuple(sorted(cond)))

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def free(self) -> tuple:
        c = set(self.cond)
        return tuple(i for i in range(self.n) if i not in c)

    def with_cond(self, cond) -> "DppKernel":
        return DppKernel(self.L, tuple(cond), self.S, self.q, self.w, self.k)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.L).min())

    def check_psd(self, tol: float = PSD_TOL) -> float:
        lam = self.min_eigenvalue()
        if lam < -tol:
            raise NotPSDError(f"kernel not PSD: min eigenvalue {lam:.3e} < -{tol:g}")
        return lam

    def to_json(self) -> dict:
        d = {"L": self.L.tolist(), "cond_indices": list(self.cond)}
        if self.q is not None:
            d["q"] = np.asarray(self.q).tolist()
        if self.w is not None:
            d["w"] = self.w
        if self.k is not None:
            d["k"] = self.k
        if self.S is not None:
            d["S"] = np.asarray(self.S).tolist()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DppKernel":
        try:
            L = d["L"]
        except (KeyError, TypeError):
            raise InputError("kernel JSON needs an 'L' matrix") from None
        return cls(
            L=L,
            cond=tuple(d.get("cond_indices", ())),
            S=None if d.get("S") is None else np.asarray(d["S"], dtype=np.float64),
            q=None if d.get("q") is None else np.asarray(d["q"], dtype=np.float64),
            w=d.get("w"),
            k=d.get("k"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _check_indices(idx: Iterable, n: int, what: str) -> list[int]:
    out = []
    for i in idx:
        if isinstance(i, (bool, np.bool_)) or int(i) != i:
            raise InputError(f"{what} {i!r} is not an integer")
        i = int(i)
        if not 0 <= i < n:
            raise InputError(f"{what} {i} out of range for ground set of size {n}")
        out.append(i)
    if len(set(out)) != len(out):
        raise InputError(f"duplicate {what}s in {out}")
    return out


def build_kernel(S, q, cond_indices=()) -> DppKernel:
    """``L_ij = q_i S_ij q_j`` with the conditioning set recorded."""
    w = k = None
    if isinstance(q, QualityVector):
        w, k = q.w, q.k
        q = q.values
    if isinstance(S, SimilarityMatrix):
        S = S.entries
    S = np.asarray(S, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64).ravel()
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InputError(f"similarity matrix must be square, got {S.shape}")
    if q.shape[0] != S.shape[0]:
        raise InputError(f"quality vector length {q.shape[0]} != similarity size {S.shape[0]}")
    L = np.outer(q, q) * S  # exactly symmetric when S is
    return DppKernel(L=L, cond=tuple(cond_indices), S=S, q=q, w=w, k=k)
