"""Closed-form adaptation losses and their analytic gradients.

Each loss returns both its scalar value and the exact gradient with respect to
the batch query quantities it consumes: global embeddings (B, D) and/or
frame-level features (B, T, D). Gallery embeddings and memory-derived targets
are constants of the step. Euclidean norms are nondifferentiable at zero; the
subgradient there is taken to be zero so updates stay finite.

Gradients are validated against central finite differences in
:mod:`hubtta.gradcheck` and the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .core import entropy, softmax
from .errors import DimensionMismatch, InsufficientSamples

V2T = "v2t"
T2V = "t2v"
MODES = (V2T, T2V)


@dataclass
class LossValue:
    """Scalar loss with gradients w.r.t. the query-side inputs.

    grad_frames is present exactly when the loss consumes frame-level
    features. ``skipped`` marks a noise-filtered batch where every sample was
    rejected (value and gradients are zero in that case).
    """

    value: float
    grad_global: np.ndarray
    grad_frames: Optional[np.ndarray] = None
    skipped: bool = False
    components: Optional[Dict[str, float]] = None


@dataclass
class LossInputs:
    """Everything one adaptation step's objective depends on."""

    query_global: np.ndarray          # (B, D) batch query embeddings
    gallery: np.ndarray               # (N_G, D) full gallery, unit rows
    pseudo_gallery: np.ndarray        # (B, D) selected pseudo-positive rows
    gap_target: float                 # target modality-gap norm
    cov_target: Optional[np.ndarray]  # (D, D) target cross-covariance; None in t2v
    entropy_threshold: float          # reliability bar for the entropy term
    frames: Optional[np.ndarray] = None  # (B, T, D); None in t2v


@dataclass
class LossConfig:
    tau: float = 0.02           # softmax temperature for correspondence probabilities
    temperature: float = 10.0   # distance scale in the scatter terms
    mode: str = V2T

    def __post_init__(self):
        if self.tau <= 0 or self.temperature <= 0:
            raise ValueError("tau and temperature must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def _safe_unit(diff: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """diff / norms with zero rows where the norm vanishes (zero subgradient)."""
    denom = np.where(norms > 0.0, norms, 1.0)
    unit = diff / denom[..., None]
    unit[norms == 0.0] = 0.0
    return unit


def loss_inter(z: np.ndarray, temperature: float) -> LossValue:
    """Scatter penalty pulling batch embeddings apart from their mean.

    value = mean_i exp(-||z_i - mean(z)||_2 / temperature); maximal (1) when
    the batch has collapsed. The gradient accounts for the mean's dependence
    on every row.
    """
    z = np.asarray(z, dtype=np.float64)
    b = z.shape[0]
    diff = z - z.mean(axis=0)
    norms = np.linalg.norm(diff, axis=1)
    terms = np.exp(-norms / temperature)
    value = float(terms.mean())
    # d/dz_k: -(1/(B t)) [e_k u_k - mean_i(e_i u_i)], u_i the unit deviation
    eu = terms[:, None] * _safe_unit(diff, norms)
    grad = -(eu - eu.mean(axis=0)) / (b * temperature)
    return LossValue(value=value, grad_global=grad)


def loss_intra(frames: np.ndarray, temperature: float) -> LossValue:
    """Scatter penalty pulling each item's frames apart from their own mean."""
    frames = np.asarray(frames, dtype=np.float64)
    b, t, _ = frames.shape
    diff = frames - frames.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(diff, axis=2)               # (B, T)
    terms = np.exp(-norms / temperature)
    value = float(terms.mean(axis=1).mean())
    eu = terms[..., None] * _safe_unit(diff, norms)    # (B, T, D)
    grad_frames = -(eu - eu.mean(axis=1, keepdims=True)) / (b * t * temperature)
    return LossValue(value=value, grad_global=np.zeros_like(frames[:, 0, :]), grad_frames=grad_frames)


def loss_global(zq: np.ndarray, zg: np.ndarray, gap_target: float) -> LossValue:
    """Squared error between the batch modality-gap norm and a stable target.

    The gap is ||mean(zq) - mean(zg)||_2; zg (the pseudo-positive gallery
    rows) is held fixed, so the gradient flows only into zq.
    """
    zq = np.asarray(zq, dtype=np.float64)
    zg = np.asarray(zg, dtype=np.float64)
    if zq.shape != zg.shape:
        raise DimensionMismatch(f"query block {zq.shape} vs gallery block {zg.shape}")
    if gap_target < 0:
        raise ValueError("gap_target must be nonnegative")
    b = zq.shape[0]
    diff = zq.mean(axis=0) - zg.mean(axis=0)
    gap = float(np.linalg.norm(diff))
    value = (gap - gap_target) ** 2
    if gap > 0.0:
        grad = np.tile(2.0 * (gap - gap_target) * diff / gap / b, (b, 1))
    else:
        grad = np.zeros_like(zq)
    return LossValue(value=float(value), grad_global=grad)


def cross_covariance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unbiased (n-1) cross-covariance of two (n, D) sample matrices."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"sample matrices differ: {x.shape} vs {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamples(f"cross-covariance needs >= 2 samples, got {n}")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    return xc.T @ yc / (n - 1)


def loss_frame(frames: np.ndarray, zg: np.ndarray, cov_target: np.ndarray) -> LossValue:
    """Mean squared error between the batch's frame/gallery cross-covariance and a target.

    Frames are flattened to (B*T, D) and each pseudo-positive gallery row is
    repeated T times so every frame pairs with its own item's match.
    """
    frames = np.asarray(frames, dtype=np.float64)
    zg = np.asarray(zg, dtype=np.float64)
    cov_target = np.asarray(cov_target, dtype=np.float64)
    b, t, d = frames.shape
    n = b * t
    if n < 2:
        raise InsufficientSamples("frame covariance needs B*T >= 2")
    x = frames.reshape(n, d)
    y = np.repeat(zg, t, axis=0)
    cov = cross_covariance(x, y)
    resid = cov - cov_target
    value = float(np.mean(resid**2))
    # dL/dCov = 2 resid / D^2; dCov/dx through centering (y is centered, so
    # the column-mean correction vanishes analytically)
    yc = y - y.mean(axis=0)
    grad_x = yc @ (2.0 * resid / d**2).T / (n - 1)
    return LossValue(
        value=value,
        grad_global=np.zeros((b, d)),
        grad_frames=grad_x.reshape(b, t, d),
    )


def reliability_weights(p: np.ndarray, entropy_threshold: float):
    """Per-row entropies and the clipped reliability weights max(1 - H/E, 0)."""
    if entropy_threshold <= 0:
        raise ValueError("entropy_threshold must be positive")
    ent = entropy(p, axis=1)
    weights = np.maximum(1.0 - ent / entropy_threshold, 0.0)
    return ent, weights


def weighted_entropy(p: np.ndarray, entropy_threshold: float):
    """Value of the noise-filtered entropy objective on probability rows.

    Returns (value, skipped): the mean of weight * entropy over rows with
    positive weight, or (0, True) when every row is filtered out.
    """
    p = np.asarray(p, dtype=np.float64)
    ent, weights = reliability_weights(p, entropy_threshold)
    active = weights > 0.0
    if not np.any(active):
        return 0.0, True
    return float(np.sum(weights[active] * ent[active]) / active.sum()), False


def loss_na(zq: np.ndarray, gallery: np.ndarray, tau: float, entropy_threshold: float) -> LossValue:
    """Noise-filtered entropy of the query-gallery correspondence probabilities.

    p_i = softmax(zq_i . gallery^T / tau). Rows whose entropy exceeds the
    threshold get zero weight; the gradient flows through the entropy both in
    the weight and in the weighted term, back through the softmax into zq.
    """
    zq = np.asarray(zq, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    if zq.shape[1] != gallery.shape[1]:
        raise DimensionMismatch(f"query dim {zq.shape[1]} != gallery dim {gallery.shape[1]}")
    scores = zq @ gallery.T
    p = softmax(scores, scale=1.0 / tau, axis=1)
    ent, weights = reliability_weights(p, entropy_threshold)
    active = weights > 0.0
    n_active = int(active.sum())
    if n_active == 0:
        return LossValue(value=0.0, grad_global=np.zeros_like(zq), skipped=True)
    value = float(np.sum(weights[active] * ent[active]) / n_active)
    # dL/dH_i = (w_i - H_i/E) / n_active on active rows (weight slope is -1/E)
    dl_dent = np.where(active, (weights - ent / entropy_threshold) / n_active, 0.0)
    # dH/ds_j = -p_j (ln p_j + H) per row, then ds/dzq = gallery / tau
    logp = np.log(np.where(p > 0.0, p, 1.0))
    dent_ds = -p * (logp + ent[:, None])
    grad = (dl_dent[:, None] * dent_ds) @ gallery / tau
    return LossValue(value=value, grad_global=grad)


def total_loss(inputs: LossInputs, config: LossConfig) -> LossValue:
    """Unweighted sum of the adaptation objective's components.

    v2t sums all five terms; t2v has no frame-level features, so the
    intra-item scatter and frame-covariance terms are omitted.
    """
    z = np.asarray(inputs.query_global, dtype=np.float64)
    use_frames = config.mode == V2T
    if use_frames and inputs.frames is None:
        raise DimensionMismatch("v2t total loss requires frame-level features")

    parts: Dict[str, LossValue] = {
        "inter": loss_inter(z, config.temperature),
        "global": loss_global(z, inputs.pseudo_gallery, inputs.gap_target),
        "na": loss_na(z, inputs.gallery, config.tau, inputs.entropy_threshold),
    }
    if use_frames:
        if inputs.cov_target is None:
            raise DimensionMismatch("v2t total loss requires a covariance target")
        parts["intra"] = loss_intra(inputs.frames, config.temperature)
        parts["frame"] = loss_frame(inputs.frames, inputs.pseudo_gallery, inputs.cov_target)

    value = sum(lv.value for lv in parts.values())
    grad_global = np.sum([lv.grad_global for lv in parts.values()], axis=0)
    grad_frames = None
    if use_frames:
        grad_frames = parts["intra"].grad_frames + parts["frame"].grad_frames
    components = {name: lv.value for name, lv in parts.items()}
    for omitted in ("intra", "frame"):
        components.setdefault(omitted, 0.0)
    components["total"] = float(value)
    return LossValue(
        value=float(value),
        grad_global=grad_global,
        grad_frames=grad_frames,
        skipped=parts["na"].skipped,
        components=components,
    )
