"""Diversity statistics for generated sample sets."""

from __future__ import annotations

import numpy as np

from .cdpp import logdet_psd
from .errors import InputError
from .sequences import as_frames


def sigma_p(seq) -> float:
    """Population standard deviation of a scalar contour's frame values."""
    x = as_frames(seq)
    if x.shape[1] != 1:
        raise InputError(f"sigma_p needs scalar frames (d = 1), got d = {x.shape[1]}")
    return float(np.std(x[:, 0]))


def cosine_similarity_matrix(batch) -> np.ndarray:
    vecs = [as_frames(s).ravel() for s in batch]
    if len(vecs) < 2:
        raise InputError("need at least two sequences")
    if len({v.shape[0] for v in vecs}) != 1:
        raise InputError("cosine similarity needs sequences of equal length and dimension")
    X = np.stack(vecs)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise InputError("zero-norm sequence in batch")
    X = X / norms[:, None]
    G = X @ X.T
    np.fill_diagonal(G, 1.0)
    return 0.5 * (G + G.T)


def diversity_determinant(batch) -> float:
    """det of the pairwise cosine-similarity matrix of flattened samples, in [0, 1]."""
    ld = logdet_psd(cosine_similarity_matrix(batch))
    return float(min(1.0, np.exp(ld))) if np.isfinite(ld) else 0.0
