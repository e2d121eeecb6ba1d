"""Hubness suppression: a sliding memory of recent score matrices and the
bilateral softmax reweighting that demotes over-popular gallery items.

The memory holds the ``window - 1`` most recent batch similarity matrices;
the current batch completes a window of size ``window``. Refinement reweights
the aggregated matrix twice -- a column-wise softmax measuring how much of a
gallery item's mass is consensus across recent queries, and a row-wise softmax
measuring how concentrated each query is -- and blends the two element-wise
products. Stored matrices are frozen at push time (raw scores of their step).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import SimilarityMatrix, softmax
from .errors import GalleryMismatch


@dataclass
class SuppressionConfig:
    """Knobs for the bilateral reweighting.

    gallery_scale sharpens the column (gallery-popularity) softmax,
    query_scale the row (query-concentration) softmax; blend in [0, 1] mixes
    the two reweighted matrices (1 = gallery side only). window is the total
    number of batches aggregated, current batch included.
    """

    gallery_scale: float = 100.0
    query_scale: float = 10.0
    blend: float = 0.5
    window: int = 100

    def __post_init__(self):
        if self.gallery_scale <= 0 or self.query_scale <= 0:
            raise ValueError("gallery_scale and query_scale must be positive")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must lie in [0, 1]")
        if self.window < 1:
            raise ValueError("window must be >= 1")


class HubnessMemory:
    """FIFO of up to ``window - 1`` recent similarity matrices, newest last."""

    def __init__(self, window: int, n_gallery: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        if n_gallery < 1:
            raise ValueError("n_gallery must be >= 1")
        self.window = window
        self.n_gallery = n_gallery
        self._queue: deque[np.ndarray] = deque(maxlen=window - 1)

    def __len__(self) -> int:
        return len(self._queue)

    def push(self, s: SimilarityMatrix) -> None:
        """Append a batch matrix, evicting the oldest once at capacity."""
        if s.n_gallery != self.n_gallery:
            raise GalleryMismatch(f"expected {self.n_gallery} gallery columns, got {s.n_gallery}")
        self._queue.append(np.array(s.scores, dtype=np.float64, copy=True))

    def snapshot(self) -> list[np.ndarray]:
        """Stored matrices, most recent first. Copies; callers cannot mutate the queue."""
        return [m.copy() for m in reversed(self._queue)]


def aggregate(mem: HubnessMemory, current: SimilarityMatrix) -> SimilarityMatrix:
    """Stack the current batch on top of the stored history, most recent first.

    During warm-up fewer than ``window`` blocks exist; the output simply has
    however many rows are available (no padding).
    """
    if current.n_gallery != mem.n_gallery:
        raise GalleryMismatch(
            f"current batch has {current.n_gallery} gallery columns, memory expects {mem.n_gallery}"
        )
    blocks = [current.scores] + mem.snapshot()
    return SimilarityMatrix(scores=np.vstack(blocks), batch_index=current.batch_index)


def refine(current: SimilarityMatrix, mem: HubnessMemory, cfg: SuppressionConfig) -> SimilarityMatrix:
    """Bilateral softmax reweighting of the aggregated scores; returns the current batch's rows.

    With ``agg`` the aggregated matrix, the output block is the first B rows of

        blend * (agg * colsoftmax(gallery_scale * agg))
        + (1 - blend) * (agg * rowsoftmax(query_scale * agg))

    where colsoftmax normalizes each gallery column over all aggregated rows
    and rowsoftmax normalizes each row over the gallery axis. Pure function:
    the memory is not mutated.
    """
    agg = aggregate(mem, current).scores
    w_gallery = softmax(agg, scale=cfg.gallery_scale, axis=0)
    w_query = softmax(agg, scale=cfg.query_scale, axis=1)
    refined = cfg.blend * (agg * w_gallery) + (1.0 - cfg.blend) * (agg * w_query)
    b = current.n_rows
    return SimilarityMatrix(scores=refined[:b], batch_index=current.batch_index)


def gallery_prior_rerank(s: SimilarityMatrix, scale: float) -> SimilarityMatrix:
    """Memoryless baseline: reweight a single matrix by its own column softmax."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    w = softmax(s.scores, scale=scale, axis=0)
    return SimilarityMatrix(scores=s.scores * w, batch_index=s.batch_index)
