"""Online dual-path retrieval loop.

Each incoming query batch is (1) passed through a lightweight per-dimension
affine adapter and pooled into unit global embeddings, (2) scored against the
fixed gallery, (3) reranked through the hubness-suppression memory, and
(4) used to take one optimizer step on the adapter via the adaptation losses.
The two paths are parallel: rankings always come from the hub-suppressed
scores computed with the adapter state *entering* the batch, so retrieval
output is a pure function of past data; the update takes effect on the next
batch (``rank_after_update`` flips that choice for ablations).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .core import NORM_EPS, EmbeddingSet, SimilarityMatrix, entropy, l2_normalize, rank_rows, softmax
from .diagnostics import HubnessReport, hubness_report, recall_at_k
from .errors import DimensionMismatch, EmptyDataset, ZeroNormRow
from .losses import LossConfig, LossInputs, T2V, V2T, cross_covariance, total_loss
from .reliable_memory import MemoryEntry, ReliableMemory, select_pseudo_positives
from .suppression import HubnessMemory, SuppressionConfig, refine

DEFAULT_LR = {V2T: 3e-4, T2V: 3e-5}


@dataclass
class StreamConfig:
    """Hyperparameters of one online stream."""

    batch_size: int = 16
    tau: float = 0.02
    temperature: float = 10.0
    learning_rate: Optional[float] = None  # None: 3e-4 for v2t, 3e-5 for t2v
    mode: str = V2T
    seed: int = 42
    suppression: SuppressionConfig = field(default_factory=SuppressionConfig)
    rm_capacity: int = 16
    threshold_scale: float = 1.0
    fallback_fraction: float = 0.5
    weight_decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rank_after_update: bool = False
    report_k: int = 15

    def __post_init__(self):
        if self.mode not in (V2T, T2V):
            raise ValueError(f"mode must be {V2T!r} or {T2V!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def lr(self) -> float:
        return DEFAULT_LR[self.mode] if self.learning_rate is None else self.learning_rate

    def loss_config(self) -> LossConfig:
        return LossConfig(tau=self.tau, temperature=self.temperature, mode=self.mode)

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "tau": self.tau,
            "temperature": self.temperature,
            "learning_rate": self.lr,
            "mode": self.mode,
            "seed": self.seed,
            "gallery_scale": self.suppression.gallery_scale,
            "query_scale": self.suppression.query_scale,
            "blend": self.suppression.blend,
            "window": self.suppression.window,
            "rm_capacity": self.rm_capacity,
            "threshold_scale": self.threshold_scale,
            "fallback_fraction": self.fallback_fraction,
            "weight_decay": self.weight_decay,
            "rank_after_update": self.rank_after_update,
            "report_k": self.report_k,
        }


class AffineAdapter:
    """Per-dimension scale-and-shift on raw embeddings, trained with Adam.

    2D parameters total: scale (init 1) and shift (init 0) of length D.
    Applying the identity adapter reproduces plain pool-and-normalize.
    """

    def __init__(self, dim: int):
        self.scale = np.ones(dim)
        self.shift = np.zeros(dim)
        self._moments = {name: (np.zeros(dim), np.zeros(dim)) for name in ("scale", "shift")}
        self.step_count = 0

    def snapshot_hash(self) -> str:
        digest = hashlib.sha256(self.scale.tobytes() + self.shift.tobytes())
        return digest.hexdigest()[:16]

    def transform(self, x: np.ndarray) -> np.ndarray:
        return self.scale * x + self.shift

    def apply(self, e: EmbeddingSet) -> EmbeddingSet:
        """Affine-map frames (or globals), pool, and unit-normalize the result."""
        if e.dim != self.scale.size:
            raise DimensionMismatch(f"adapter dim {self.scale.size} != embeddings dim {e.dim}")
        if e.frames is not None:
            affine = self.transform(e.frames)
            pooled = affine.mean(axis=1)
        else:
            affine = None
            pooled = self.transform(e.data)
        data, _ = _normalize_with_norms(pooled)
        return EmbeddingSet(data=data, frames=affine, ids=e.ids)

    def adam_step(self, grad_scale: np.ndarray, grad_shift: np.ndarray, cfg: StreamConfig) -> None:
        """One bias-corrected Adam update (decoupled weight decay, default 0)."""
        self.step_count += 1
        t = self.step_count
        for name, grad in (("scale", grad_scale), ("shift", grad_shift)):
            m, v = self._moments[name]
            m[:] = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * grad
            v[:] = cfg.adam_beta2 * v + (1 - cfg.adam_beta2) * grad**2
            m_hat = m / (1 - cfg.adam_beta1**t)
            v_hat = v / (1 - cfg.adam_beta2**t)
            param = getattr(self, name)
            param -= cfg.lr * (m_hat / (np.sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * param)


def _normalize_with_norms(pooled: np.ndarray):
    norms = np.linalg.norm(pooled, axis=1)
    bad = np.nonzero(norms < NORM_EPS)[0]
    if bad.size:
        raise ZeroNormRow(int(bad[0]))
    return pooled / norms[:, None], norms


@dataclass
class BatchResult:
    """Observability record for one processed batch."""

    batch_index: int
    rankings: np.ndarray            # (B, N_G) refined-path permutations
    raw_rankings: np.ndarray        # (B, N_G) unrefined-path permutations
    loss_breakdown: Optional[Dict[str, float]]
    adapter_hash: str               # adapter state entering this batch
    entropies: np.ndarray           # (B,) entropy of each row's correspondence probs
    na_skipped: bool = False


def batch_adaptation_grads(
    adapter: AffineAdapter,
    batch: EmbeddingSet,
    gallery: np.ndarray,
    pseudo_gallery: np.ndarray,
    gap_target: float,
    cov_target: Optional[np.ndarray],
    entropy_threshold: float,
    config: StreamConfig,
):
    """Total loss at the current adapter state plus its gradient on (scale, shift).

    Pseudo-positives and memory targets are constants of the step; the chain
    runs loss -> global embeddings -> pooled mean -> affine frames -> params.
    Exposed separately so the first-order descent property can be tested
    directly. Returns (LossValue, grad_scale, grad_shift).
    """
    if batch.frames is not None:
        affine = adapter.transform(batch.frames)
        pooled = affine.mean(axis=1)
    else:
        affine = None
        pooled = adapter.transform(batch.data)
    z, norms = _normalize_with_norms(pooled)

    inputs = LossInputs(
        query_global=z,
        gallery=gallery,
        pseudo_gallery=pseudo_gallery,
        gap_target=gap_target,
        cov_target=cov_target,
        entropy_threshold=entropy_threshold,
        frames=affine,
    )
    loss = total_loss(inputs, config.loss_config())

    # through row normalization: g_pooled = (g_z - (g_z . z) z) / ||pooled||
    gz = loss.grad_global
    g_pooled = (gz - np.sum(gz * z, axis=1, keepdims=True) * z) / norms[:, None]
    if batch.frames is not None:
        t = batch.frames.shape[1]
        g_affine = g_pooled[:, None, :] / t
        if loss.grad_frames is not None:
            g_affine = g_affine + loss.grad_frames
        grad_scale = np.einsum("btd,btd->d", g_affine, batch.frames)
        grad_shift = g_affine.sum(axis=(0, 1))
    else:
        grad_scale = np.sum(g_pooled * batch.data, axis=0)
        grad_shift = g_pooled.sum(axis=0)
    return loss, grad_scale, grad_shift


class RetrievalStream:
    """Stateful online loop over one query stream against a fixed gallery.

    Single-writer: batches must be processed sequentially. Independent
    streams can run concurrently, each owning its own instance.
    """

    def __init__(self, gallery: EmbeddingSet, config: StreamConfig, adapt: bool = True):
        self.config = config
        self.gallery = l2_normalize(gallery).data
        self.memory = HubnessMemory(config.suppression.window, self.gallery.shape[0])
        self.reliable = ReliableMemory(config.rm_capacity)
        self.adapter = AffineAdapter(self.gallery.shape[1])
        self.adapt = adapt
        self.step = 0

    def process_batch(self, batch: EmbeddingSet) -> BatchResult:
        cfg = self.config
        entering_hash = self.adapter.snapshot_hash()

        adapted = self.adapter.apply(batch)
        z = adapted.data
        s_t = SimilarityMatrix(scores=z @ self.gallery.T, batch_index=self.step)
        refined = refine(s_t, self.memory, cfg.suppression)

        p = softmax(s_t.scores, scale=1.0 / cfg.tau, axis=1)
        row_entropies = entropy(p, axis=1)

        breakdown = None
        na_skipped = False
        if self.adapt:
            picks = select_pseudo_positives(refined, cfg.tau)
            self.reliable.update(
                [
                    MemoryEntry(query=z[qi], gallery=self.gallery[gi], entropy=ent, step=self.step)
                    for qi, gi, ent in picks
                ]
            )
            pseudo = self.gallery[[gi for _, gi, _ in picks]]
            fallback_gap = float(np.linalg.norm(z.mean(axis=0) - pseudo.mean(axis=0)))
            fallback_cov = None
            if adapted.frames is not None and adapted.frames.shape[0] * adapted.frames.shape[1] >= 2:
                b, t, d = adapted.frames.shape
                fallback_cov = cross_covariance(
                    adapted.frames.reshape(b * t, d), np.repeat(pseudo, t, axis=0)
                )
            targets = self.reliable.targets(
                fallback_gap=fallback_gap,
                fallback_cov=fallback_cov,
                n_gallery=self.gallery.shape[0],
                threshold_scale=cfg.threshold_scale,
                fallback_fraction=cfg.fallback_fraction,
            )
            loss, grad_scale, grad_shift = batch_adaptation_grads(
                self.adapter, batch, self.gallery, pseudo,
                targets.gap, targets.cov, targets.entropy_threshold, cfg,
            )
            breakdown = loss.components
            na_skipped = loss.skipped
            if cfg.lr != 0.0:
                self.adapter.adam_step(grad_scale, grad_shift, cfg)

        self.memory.push(s_t)
        self.step += 1

        if cfg.rank_after_update and self.adapt:
            post = self.adapter.apply(batch)
            s_rank = SimilarityMatrix(scores=post.data @ self.gallery.T, batch_index=s_t.batch_index)
            # ablation path; the memory still holds the pre-step scores
            refined_rank = refine(s_rank, self.memory, cfg.suppression)
            rankings = rank_rows(refined_rank.scores)
            raw_rankings = rank_rows(s_rank.scores)
        else:
            rankings = rank_rows(refined.scores)
            raw_rankings = rank_rows(s_t.scores)

        return BatchResult(
            batch_index=s_t.batch_index,
            rankings=rankings,
            raw_rankings=raw_rankings,
            loss_breakdown=breakdown,
            adapter_hash=entering_hash,
            entropies=row_entropies,
            na_skipped=na_skipped,
        )


@dataclass
class RetrievalDataset:
    """Ordered query stream, fixed gallery, and one true match per query."""

    queries: EmbeddingSet
    gallery: EmbeddingSet
    ground_truth: np.ndarray


@dataclass
class StreamReport:
    """Single-pass evaluation summary of one stream run.

    The accumulated per-query rankings ride along for callers that need them
    (CSV export); they are not part of the serialized report.
    """

    mode: str
    seed: int
    n_queries: int
    n_gallery: int
    config: dict
    recall_refined: Dict[int, float]
    recall_raw: Dict[int, float]
    hubness_refined: HubnessReport
    hubness_raw: HubnessReport
    timeline: List[dict]
    final_adapter_hash: str
    rankings_refined: Optional[np.ndarray] = None
    rankings_raw: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": int(self.seed),
            "n_queries": int(self.n_queries),
            "n_gallery": int(self.n_gallery),
            "config": self.config,
            "recall": {
                "refined": {str(k): v for k, v in self.recall_refined.items()},
                "raw": {str(k): v for k, v in self.recall_raw.items()},
            },
            "hubness": {
                "refined": self.hubness_refined.to_dict(),
                "raw": self.hubness_raw.to_dict(),
            },
            "timeline": self.timeline,
            "final_adapter_hash": self.final_adapter_hash,
        }


def _batch_view(queries: EmbeddingSet, start: int, stop: int) -> EmbeddingSet:
    frames = None if queries.frames is None else queries.frames[start:stop]
    ids = None if queries.ids is None else list(queries.ids[start:stop])
    return EmbeddingSet(data=queries.data[start:stop], frames=frames, ids=ids)


def run_stream(dataset: RetrievalDataset, config: StreamConfig, adapt: bool = True) -> StreamReport:
    """One online pass over the query stream; metrics recorded after every batch.

    v2t treats global-only queries as single-frame videos; t2v requires
    global-only queries (frame features do not exist on the text side).
    """
    queries = dataset.queries
    n = queries.n_items
    if n < 1:
        raise EmptyDataset("no queries in dataset")
    ground_truth = np.asarray(dataset.ground_truth)

    if config.mode == V2T and queries.frames is None:
        queries = EmbeddingSet(data=queries.data, frames=queries.data[:, None, :], ids=queries.ids)
    if config.mode == T2V:
        if queries.frames is not None and queries.frames.shape[1] > 1:
            raise DimensionMismatch("t2v queries must be global-only (no frame axis)")
        queries = EmbeddingSet(data=queries.data, frames=None, ids=queries.ids)

    stream = RetrievalStream(dataset.gallery, config, adapt=adapt)
    n_gallery = stream.gallery.shape[0]

    all_refined = np.empty((n, n_gallery), dtype=np.int64)
    all_raw = np.empty((n, n_gallery), dtype=np.int64)
    timeline: List[dict] = []
    ks = tuple(k for k in (1, 5, 10) if k <= n_gallery)

    for start in range(0, n, config.batch_size):
        stop = min(start + config.batch_size, n)
        result = stream.process_batch(_batch_view(queries, start, stop))
        all_refined[start:stop] = result.rankings
        all_raw[start:stop] = result.raw_rankings
        gt = ground_truth[start:stop]
        entry = {
            "batch": result.batch_index,
            "adapter_hash": result.adapter_hash,
            "entropy_mean": float(result.entropies.mean()),
            "r1_refined": recall_at_k(result.rankings, gt, (1,))[1],
            "r1_raw": recall_at_k(result.raw_rankings, gt, (1,))[1],
            "na_skipped": bool(result.na_skipped),
        }
        if result.loss_breakdown is not None:
            entry["loss"] = {name: float(v) for name, v in result.loss_breakdown.items()}
        timeline.append(entry)

    k_report = min(config.report_k, n_gallery)
    return StreamReport(
        mode=config.mode,
        seed=config.seed,
        n_queries=n,
        n_gallery=n_gallery,
        config=config.to_dict(),
        recall_refined=recall_at_k(all_refined, ground_truth, ks),
        recall_raw=recall_at_k(all_raw, ground_truth, ks),
        hubness_refined=hubness_report(all_refined, k=k_report, ground_truth=ground_truth),
        hubness_raw=hubness_report(all_raw, k=k_report, ground_truth=ground_truth),
        timeline=timeline,
        final_adapter_hash=stream.adapter.snapshot_hash(),
        rankings_refined=all_refined,
        rankings_raw=all_raw,
    )
