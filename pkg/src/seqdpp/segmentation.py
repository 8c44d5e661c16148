"""Target/context segmentation of word sequences.

Prominence mode: every target starts at a prominent word and runs up to the
next prominent word (or the end of the sentence). Its left and right
contexts are the adjacent spans with the same number of words, clipped at
the sentence edges. Fixed mode alternates context and target blocks of
``n`` words. All spans are half-open ``[start, end)`` word indices; the
desk-scale pipeline maps one word to one frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError

Span = tuple  # (start, end), half-open


class NoProminentWordError(InputError):
    pass


@dataclass(frozen=True)
class ProminenceLabeledText:
    words: tuple
    prominence: tuple

    def __post_init__(self):
        words = tuple(self.words)
        prom = tuple(float(p) for p in self.prominence)
        if not words:
            raise InputError("text needs at least one word")
        if len(words) != len(prom):
            raise InputError(f"{len(words)} words but {len(prom)} prominence values")
        if not all(np.isfinite(prom)):
            raise InputError("prominence values must be finite")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "prominence", prom)

    @classmethod
    def from_json(cls, d: dict) -> "ProminenceLabeledText":
        try:
            return cls(d["words"], d.get("prominence", [0.0] * len(d["words"])))
        except (KeyError, TypeError):
            raise InputError("text JSON needs 'words' (and 'prominence')") from None


@dataclass(frozen=True)
class Triple:
    left: Span
    target: Span
    right: Span

    def to_json(self) -> list:
        return [list(self.left), list(self.target), list(self.right)]


@dataclass(frozen=True)
class Segmentation:
    n_words: int
    triples: tuple

    def __len__(self):
        return len(self.triples)

    @property
    def targets(self) -> list:
        return [t.target for t in self.triples]

    def to_json(self) -> list:
        return [t.to_json() for t in self.triples]


def _triple(start, end, n_words):
    size = end - start
    return Triple(
        left=(max(0, start - size), start),
        target=(start, end),
        right=(end, min(n_words, end + size)),
    )


def segment_prominence(text: ProminenceLabeledText, threshold: float = 0.5) -> Segmentation:
    n = len(text.words)
    starts = [i for i, p in enumerate(text.prominence) if p >= threshold]
    if not starts:
        raise NoProminentWordError(
            f"no word has prominence >= {threshold}; use fixed-length segmentation instead"
        )
    ends = starts[1:] + [n]
    return Segmentation(n, tuple(_triple(s, e, n) for s, e in zip(starts, ends)))


def fixed_blocks(n_words: int, n: int) -> list[Span]:
    """Consecutive blocks of ``n`` words; the remainder joins the last block."""
    if n < 1:
        raise InputError(f"block length must be >= 1, got {n}")
    if n_words <= n:
        return [(0, n_words)]
    blocks = [(i * n, (i + 1) * n) for i in range(n_words // n)]
    blocks[-1] = (blocks[-1][0], n_words)
    return blocks


def segment_fixed(words: Sequence, n: int) -> Segmentation:
    """Alternate context / target / context ... blocks of ``n`` words."""
    n_words = len(words)
    if n_words == 0:
        return Segmentation(0, ())
    blocks = fixed_blocks(n_words, n)
    triples = []
    for b in range(1, len(blocks), 2):
        left = blocks[b - 1]
        right = blocks[b + 1] if b + 1 < len(blocks) else (blocks[b][1], blocks[b][1])
        triples.append(Triple(left, blocks[b], right))
    return Segmentation(n_words, tuple(triples))
