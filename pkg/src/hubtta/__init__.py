"""Hubness-aware online retrieval on precomputed embeddings.

Three capabilities, composable or standalone:

* similarity refinement through a sliding memory of recent batches
  (:mod:`hubtta.suppression`), demoting gallery items that dominate too many
  queries' rankings;
* test-time adaptation of query embeddings via a per-dimension affine adapter
  trained online with closed-form loss gradients (:mod:`hubtta.losses`,
  :mod:`hubtta.pipeline`);
* hubness diagnostics -- k-occurrence analysis, inequality metrics, Recall@K
  (:mod:`hubtta.diagnostics`).

:mod:`hubtta.synth` generates reproducible shifted fixtures and
:mod:`hubtta.io` defines the binary embedding file format.
"""

from .core import (
    EmbeddingSet,
    ProbabilityRow,
    SimilarityMatrix,
    cosine_similarity,
    entropy,
    l2_normalize,
    mean_pool,
    rank_rows,
    softmax,
)
from .diagnostics import (
    HubnessReport,
    antihub_rate,
    atkinson_index,
    hub_occurrence,
    hubness_report,
    k_occurrence,
    recall_at_k,
    robin_hood_index,
    skewness,
    truncated_skewness,
)
from .losses import (
    LossConfig,
    LossInputs,
    LossValue,
    cross_covariance,
    loss_frame,
    loss_global,
    loss_inter,
    loss_intra,
    loss_na,
    total_loss,
)
from .pipeline import (
    AffineAdapter,
    BatchResult,
    RetrievalDataset,
    RetrievalStream,
    StreamConfig,
    StreamReport,
    run_stream,
)
from .reliable_memory import MemoryEntry, MemoryTargets, ReliableMemory, select_pseudo_positives
from .suppression import HubnessMemory, SuppressionConfig, aggregate, gallery_prior_rerank, refine
from .synth import SynthSpec, apply_shift, make_paired

__version__ = "0.1.0"

__all__ = [
    "AffineAdapter",
    "BatchResult",
    "EmbeddingSet",
    "HubnessMemory",
    "HubnessReport",
    "LossConfig",
    "LossInputs",
    "LossValue",
    "MemoryEntry",
    "MemoryTargets",
    "ProbabilityRow",
    "ReliableMemory",
    "RetrievalDataset",
    "RetrievalStream",
    "SimilarityMatrix",
    "StreamConfig",
    "StreamReport",
    "SuppressionConfig",
    "SynthSpec",
    "aggregate",
    "antihub_rate",
    "apply_shift",
    "atkinson_index",
    "cosine_similarity",
    "cross_covariance",
    "entropy",
    "gallery_prior_rerank",
    "hub_occurrence",
    "hubness_report",
    "k_occurrence",
    "l2_normalize",
    "loss_frame",
    "loss_global",
    "loss_inter",
    "loss_intra",
    "loss_na",
    "make_paired",
    "mean_pool",
    "rank_rows",
    "recall_at_k",
    "refine",
    "robin_hood_index",
    "run_stream",
    "select_pseudo_positives",
    "skewness",
    "softmax",
    "total_loss",
    "truncated_skewness",
]
