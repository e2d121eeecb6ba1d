"""Dense embedding containers and the numeric primitives everything else builds on.

All arithmetic is done in float64; file I/O downcasts to float32 at the
boundary (see :mod:`hubtta.io`). Every function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput, ZeroNormRow

NORM_EPS = 1e-12


@dataclass
class EmbeddingSet:
    """A set of N embeddings, optionally with T per-item frame vectors.

    ``data`` is (N, D). ``frames``, when present, is (N, T, D); sets built by
    :func:`mean_pool` keep ``data`` equal to the frame mean, while
    :func:`l2_normalize` renormalizes both levels independently (after which
    ``data`` is the *normalized* pooled vector, no longer the raw mean).
    """

    data: np.ndarray
    frames: Optional[np.ndarray] = None
    ids: Optional[Sequence] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise DimensionMismatch(f"data must be (N, D) with N,D >= 1, got {self.data.shape}")
        if self.frames is not None:
            self.frames = np.asarray(self.frames, dtype=np.float64)
            if self.frames.ndim != 3:
                raise DimensionMismatch(f"frames must be (N, T, D), got {self.frames.shape}")
            n, t, d = self.frames.shape
            if t < 1 or (n, d) != self.data.shape:
                raise DimensionMismatch(
                    f"frames {self.frames.shape} inconsistent with data {self.data.shape}"
                )

    @property
    def n_items(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def n_frames(self) -> Optional[int]:
        return None if self.frames is None else self.frames.shape[1]


@dataclass
class SimilarityMatrix:
    """A (B, N_gallery) score matrix tagged with the batch time step."""

    scores: np.ndarray
    batch_index: int = 0

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2 or min(self.scores.shape) < 1:
            raise DimensionMismatch(f"scores must be (B, N_G) with B,N_G >= 1, got {self.scores.shape}")
        if self.batch_index < 0:
            raise ValueError("batch_index must be nonnegative")

    @property
    def n_rows(self) -> int:
        return self.scores.shape[0]

    @property
    def n_gallery(self) -> int:
        return self.scores.shape[1]


@dataclass
class ProbabilityRow:
    """A categorical distribution over gallery items plus its entropy in nats."""

    p: np.ndarray
    entropy: float

    @classmethod
    def from_scores(cls, scores: np.ndarray, tau: float) -> "ProbabilityRow":
        """Build from one similarity row via a temperature-tau softmax."""
        p = softmax(scores, scale=1.0 / tau)
        return cls(p=p, entropy=entropy(p))

    def validate(self, atol: float = 1e-9) -> None:
        if np.any(self.p < 0) or abs(float(self.p.sum()) - 1.0) > atol:
            raise ValueError("p is not a probability vector")
        if not (-atol <= self.entropy <= np.log(self.p.size) + atol):
            raise ValueError("entropy outside [0, ln n]")


def row_norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.square(x), axis=-1))


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = row_norms(x)
    flat = norms.reshape(-1)
    bad = np.nonzero(flat < NORM_EPS)[0]
    if bad.size:
        raise ZeroNormRow(int(bad[0]))
    return x / norms[..., None]


def l2_normalize(e: EmbeddingSet) -> EmbeddingSet:
    """Return a copy with every row (and frame row) scaled to unit norm."""
    frames = None if e.frames is None else _normalize_rows(e.frames)
    return EmbeddingSet(data=_normalize_rows(e.data), frames=frames, ids=e.ids)


def mean_pool(frames: np.ndarray) -> EmbeddingSet:
    """Pool (N, T, D) frame vectors into per-item means, keeping the frames."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise DimensionMismatch(f"expected (N, T, D) frames, got {frames.shape}")
    return EmbeddingSet(data=frames.mean(axis=1), frames=frames)


def cosine_similarity(q: EmbeddingSet, g: EmbeddingSet, batch_index: int = 0) -> SimilarityMatrix:
    """Dot-product scores between unit-normalized query and gallery rows."""
    if q.dim != g.dim:
        raise DimensionMismatch(f"query dim {q.dim} != gallery dim {g.dim}")
    return SimilarityMatrix(scores=q.data @ g.data.T, batch_index=batch_index)


def softmax(x: np.ndarray, scale: float = 1.0, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax of ``scale * x`` along ``axis``.

    The sharpness parameter is a multiplicative scale: callers wanting a
    temperature ``tau`` pass ``scale=1/tau``. ``scale -> 0`` gives the uniform
    distribution.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("softmax input contains non-finite entries")
    z = scale * x
    z = z - np.max(z, axis=axis, keepdims=True)
    ez = np.exp(z)
    return ez / np.sum(ez, axis=axis, keepdims=True)


def entropy(p: np.ndarray, axis: int = -1) -> np.ndarray | float:
    """Shannon entropy in nats, with the 0 * log(0) = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    h = -np.sum(terms, axis=axis)
    return float(h) if np.ndim(h) == 0 else h


def rank_rows(scores: np.ndarray) -> np.ndarray:
    """Per-row gallery permutation by descending score; ties break to the lower index."""
    scores = np.asarray(scores)
    return np.argsort(-scores, axis=-1, kind="stable")
