"""Reliable memory of confident query-gallery pairs and the stable targets it supplies.

The memory keeps the lowest-entropy pseudo-positive pairs seen so far (ties
favor newer entries) and derives three quantities for the adaptation losses:
a target modality-gap norm, a target cross-covariance, and the entropy
threshold used for noise filtering. With fewer than two stored pairs the
caller's current-batch statistics are used instead, which makes the
corresponding losses evaluate to zero on that batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import SimilarityMatrix, entropy, softmax
from .losses import cross_covariance


@dataclass
class MemoryEntry:
    query: np.ndarray     # (D,) global query embedding, unit norm
    gallery: np.ndarray   # (D,) matched gallery embedding, unit norm
    entropy: float
    step: int


@dataclass
class MemoryTargets:
    """Targets handed to the losses: gap norm, covariance, entropy threshold."""

    gap: float
    cov: Optional[np.ndarray]
    entropy_threshold: float
    from_fallback: bool = False


def select_pseudo_positives(
    refined: SimilarityMatrix, tau: float = 0.02
) -> List[Tuple[int, int, float]]:
    """Per query row: the argmax gallery index and the row's softmax entropy.

    Operates on hub-suppressed scores so popularity bias does not leak into
    target selection. Argmax ties resolve to the lowest gallery index; the
    returned entropy is the confidence measure (lower = more confident).
    """
    scores = refined.scores
    picks = np.argmax(scores, axis=1)
    p = softmax(scores, scale=1.0 / tau, axis=1)
    ents = entropy(p, axis=1)
    return [(i, int(picks[i]), float(ents[i])) for i in range(scores.shape[0])]


class ReliableMemory:
    """Capacity-bounded store of (query, gallery, entropy) pairs, best-first."""

    def __init__(self, capacity: int = 16):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: List[MemoryEntry] = []

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> Sequence[MemoryEntry]:
        return tuple(self._entries)

    def update(self, candidates: Sequence[MemoryEntry]) -> None:
        """Merge candidates and keep the ``capacity`` lowest-entropy entries.

        Ties on entropy keep the newer entry (larger step). Candidates are
        never gated on arrival; unreliable ones simply lose the ordering.
        """
        pool = self._entries + [
            MemoryEntry(
                query=np.array(c.query, dtype=np.float64, copy=True),
                gallery=np.array(c.gallery, dtype=np.float64, copy=True),
                entropy=float(c.entropy),
                step=int(c.step),
            )
            for c in candidates
        ]
        pool.sort(key=lambda e: (e.entropy, -e.step))
        self._entries = pool[: self.capacity]

    def mean_entropy(self) -> float:
        return float(np.mean([e.entropy for e in self._entries])) if self._entries else 0.0

    def targets(
        self,
        fallback_gap: float,
        fallback_cov: Optional[np.ndarray],
        n_gallery: int,
        threshold_scale: float = 1.0,
        fallback_fraction: float = 0.5,
    ) -> MemoryTargets:
        """Derive loss targets from the stored pairs; pure read, no mutation.

        ``fallback_gap``/``fallback_cov`` are the current batch's own
        statistics, used when fewer than two pairs are stored. The entropy
        threshold is ``threshold_scale * mean stored entropy``, falling back
        to ``fallback_fraction * ln(n_gallery)`` whenever that mean is not
        positive (so the threshold is always > 0).
        """
        floor = fallback_fraction * float(np.log(max(n_gallery, 2)))
        if len(self._entries) < 2:
            return MemoryTargets(
                gap=float(fallback_gap), cov=fallback_cov,
                entropy_threshold=floor, from_fallback=True,
            )
        queries = np.stack([e.query for e in self._entries])
        galleries = np.stack([e.gallery for e in self._entries])
        gap = float(np.linalg.norm(queries.mean(axis=0) - galleries.mean(axis=0)))
        cov = cross_covariance(queries, galleries)
        mean_ent = self.mean_entropy()
        threshold = threshold_scale * mean_ent if mean_ent > 0.0 else floor
        return MemoryTargets(gap=gap, cov=cov, entropy_threshold=threshold)
