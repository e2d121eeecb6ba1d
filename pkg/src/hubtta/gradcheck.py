"""Central finite-difference verification of the analytic loss gradients.

The numeric side only ever evaluates loss *values*, so it is independent of
the gradient code it checks. Errors are reported as

    max|analytic - numeric| / max(max|numeric|, 1e-12)

i.e. the largest entry-wise deviation relative to the gradient's own scale.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np

from .losses import (
    LossConfig,
    LossInputs,
    T2V,
    V2T,
    loss_frame,
    loss_global,
    loss_inter,
    loss_intra,
    loss_na,
    total_loss,
)

DEFAULT_TOLERANCE = 1e-3


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Entry-wise central difference (f(x+h) - f(x-h)) / 2h."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        up = f(x)
        flat_x[i] = orig - h
        down = f(x)
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _random_instance(rng: np.random.Generator, b: int, t: int, d: int, n_gallery: int) -> LossInputs:
    gallery = _unit_rows(rng, n_gallery, d)
    pseudo = gallery[rng.integers(0, n_gallery, size=b)]
    return LossInputs(
        query_global=_unit_rows(rng, b, d),
        gallery=gallery,
        pseudo_gallery=pseudo,
        gap_target=float(rng.uniform(0.2, 1.2)),
        cov_target=rng.standard_normal((d, d)) * 0.1,
        entropy_threshold=0.9 * float(np.log(n_gallery)),
        frames=rng.standard_normal((b, t, d)),
    )


def run_gradient_suite(
    seed: int = 42,
    trials: int = 20,
    b: int = 4,
    t: int = 3,
    d: int = 8,
    n_gallery: int = 20,
    tau: float = 0.02,
    temperature: float = 10.0,
    h: float = 1e-4,
) -> Dict[str, float]:
    """Max relative FD error per loss over ``trials`` seeded random instances."""
    rng = np.random.default_rng(seed)
    worst: Dict[str, float] = {}

    def record(name: str, err: float) -> None:
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(trials):
        inst = _random_instance(rng, b, t, d, n_gallery)
        z = inst.query_global
        frames = inst.frames

        record("inter", max_relative_error(
            loss_inter(z, temperature).grad_global,
            central_difference(lambda x: loss_inter(x, temperature).value, z.copy(), h),
        ))
        record("intra", max_relative_error(
            loss_intra(frames, temperature).grad_frames,
            central_difference(lambda x: loss_intra(x, temperature).value, frames.copy(), h),
        ))
        record("global", max_relative_error(
            loss_global(z, inst.pseudo_gallery, inst.gap_target).grad_global,
            central_difference(
                lambda x: loss_global(x, inst.pseudo_gallery, inst.gap_target).value, z.copy(), h
            ),
        ))
        record("frame", max_relative_error(
            loss_frame(frames, inst.pseudo_gallery, inst.cov_target).grad_frames,
            central_difference(
                lambda x: loss_frame(x, inst.pseudo_gallery, inst.cov_target).value,
                frames.copy(), h,
            ),
        ))
        record("na", max_relative_error(
            loss_na(z, inst.gallery, tau, inst.entropy_threshold).grad_global,
            central_difference(
                lambda x: loss_na(x, inst.gallery, tau, inst.entropy_threshold).value, z.copy(), h
            ),
        ))

        for mode in (V2T, T2V):
            cfg = LossConfig(tau=tau, temperature=temperature, mode=mode)
            total = total_loss(inst, cfg)

            def value_given_global(x, inst=inst, cfg=cfg):
                probe = LossInputs(**{**inst.__dict__, "query_global": x})
                return total_loss(probe, cfg).value

            err = max_relative_error(
                total.grad_global, central_difference(value_given_global, z.copy(), h)
            )
            if mode == V2T:
                def value_given_frames(x, inst=inst, cfg=cfg):
                    probe = LossInputs(**{**inst.__dict__, "frames": x})
                    return total_loss(probe, cfg).value

                err = max(err, max_relative_error(
                    total.grad_frames, central_difference(value_given_frames, frames.copy(), h)
                ))
            record(f"total_{mode}", err)

    return worst
