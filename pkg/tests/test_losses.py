import numpy as np
import pytest

from hubtta.core import softmax
from hubtta.errors import InsufficientSamples
from hubtta.gradcheck import central_difference, max_relative_error
from hubtta.losses import (
    LossConfig,
    LossInputs,
    cross_covariance,
    loss_frame,
    loss_global,
    loss_inter,
    loss_intra,
    loss_na,
    total_loss,
    weighted_entropy,
)

from conftest import unit_rows

FD_TOL = 1e-3


def random_inputs(rng, b=4, t=3, d=8, n_gallery=16):
    gallery = unit_rows(rng, n_gallery, d)
    return LossInputs(
        query_global=unit_rows(rng, b, d),
        gallery=gallery,
        pseudo_gallery=gallery[rng.integers(0, n_gallery, b)],
        gap_target=float(rng.uniform(0.2, 1.0)),
        cov_target=rng.standard_normal((d, d)) * 0.1,
        entropy_threshold=0.9 * np.log(n_gallery),
        frames=rng.standard_normal((b, t, d)),
    )


class TestLossInter:
    def test_collapsed_batch_is_one(self):
        z = np.tile([[0.3, 0.7, 0.2]], (2, 1))
        out = loss_inter(z, temperature=10.0)
        assert out.value == 1.0
        np.testing.assert_array_equal(out.grad_global, 0.0)

    def test_single_row(self):
        out = loss_inter(np.array([[1.0, 2.0]]), temperature=5.0)
        assert out.value == 1.0
        np.testing.assert_array_equal(out.grad_global, 0.0)

    def test_value_in_unit_interval(self, rng):
        out = loss_inter(rng.standard_normal((6, 4)), temperature=10.0)
        assert 0.0 < out.value <= 1.0

    def test_gradient_matches_fd(self, rng):
        z = rng.standard_normal((4, 8))
        analytic = loss_inter(z, 10.0).grad_global
        numeric = central_difference(lambda x: loss_inter(x, 10.0).value, z.copy())
        assert max_relative_error(analytic, numeric) < FD_TOL

    def test_row_permutation_invariant(self, rng):
        z = rng.standard_normal((5, 6))
        perm = rng.permutation(5)
        assert abs(loss_inter(z, 10.0).value - loss_inter(z[perm], 10.0).value) < 1e-12


class TestLossIntra:
    def test_identical_frames_contribute_one(self):
        frames = np.tile([[0.1, 0.9]], (1, 4, 1)).reshape(1, 4, 2)
        assert loss_intra(frames, 10.0).value == 1.0

    def test_single_frame_is_one_with_zero_grad(self, rng):
        frames = rng.standard_normal((3, 1, 5))
        out = loss_intra(frames, 10.0)
        assert out.value == 1.0
        np.testing.assert_array_equal(out.grad_frames, 0.0)

    def test_gradient_matches_fd(self, rng):
        frames = rng.standard_normal((3, 4, 8))
        analytic = loss_intra(frames, 10.0).grad_frames
        numeric = central_difference(lambda x: loss_intra(x, 10.0).value, frames.copy())
        assert max_relative_error(analytic, numeric) < FD_TOL

    def test_value_in_unit_interval(self, rng):
        assert 0.0 < loss_intra(rng.standard_normal((4, 3, 6)), 10.0).value <= 1.0


class TestLossGlobal:
    def test_gap_equal_to_target(self, rng):
        zq = unit_rows(rng, 4, 6)
        zg = unit_rows(rng, 4, 6)
        gap = float(np.linalg.norm(zq.mean(axis=0) - zg.mean(axis=0)))
        out = loss_global(zq, zg, gap)
        assert abs(out.value) < 1e-18
        np.testing.assert_allclose(out.grad_global, 0.0, atol=1e-12)

    def test_identical_blocks_zero_target(self, rng):
        z = unit_rows(rng, 3, 5)
        assert loss_global(z, z.copy(), 0.0).value == 0.0

    def test_gradient_matches_fd(self, rng):
        zq, zg = rng.standard_normal((4, 8)), rng.standard_normal((4, 8))
        analytic = loss_global(zq, zg, 0.7).grad_global
        numeric = central_difference(lambda x: loss_global(x, zg, 0.7).value, zq.copy())
        assert max_relative_error(analytic, numeric) < FD_TOL

    def test_nonnegative(self, rng):
        assert loss_global(rng.standard_normal((3, 4)), rng.standard_normal((3, 4)), 0.3).value >= 0


class TestCrossCovariance:
    def test_constant_x_gives_zero(self, rng):
        x = np.tile([[1.0, 2.0]], (5, 1))
        np.testing.assert_allclose(cross_covariance(x, rng.standard_normal((5, 2))), 0.0, atol=1e-12)

    def test_one_dimensional_hand_case(self):
        x = np.array([[1.0], [-1.0]])
        np.testing.assert_allclose(cross_covariance(x, x), [[2.0]])

    def test_matches_brute_force(self, rng):
        from oracles import cross_covariance_brute

        x, y = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
        np.testing.assert_allclose(
            cross_covariance(x, y), cross_covariance_brute(x.tolist(), y.tolist()), atol=1e-12
        )

    def test_too_few_samples(self):
        with pytest.raises(InsufficientSamples):
            cross_covariance(np.ones((1, 3)), np.ones((1, 3)))


class TestLossFrame:
    def test_zero_when_cov_matches_target(self, rng):
        frames = rng.standard_normal((2, 3, 4))
        zg = unit_rows(rng, 2, 4)
        target = cross_covariance(frames.reshape(6, 4), np.repeat(zg, 3, axis=0))
        out = loss_frame(frames, zg, target)
        assert out.value < 1e-24
        np.testing.assert_allclose(out.grad_frames, 0.0, atol=1e-12)

    def test_constant_frames_zero_target(self, rng):
        frames = np.tile([[0.5, -0.5, 1.0]], (2, 3, 1)).reshape(2, 3, 3)
        out = loss_frame(frames, unit_rows(rng, 2, 3), np.zeros((3, 3)))
        assert out.value < 1e-24

    def test_gradient_matches_fd(self, rng):
        frames = rng.standard_normal((2, 3, 4))
        zg = unit_rows(rng, 2, 4)
        target = rng.standard_normal((4, 4)) * 0.1
        analytic = loss_frame(frames, zg, target).grad_frames
        numeric = central_difference(lambda x: loss_frame(x, zg, target).value, frames.copy())
        assert max_relative_error(analytic, numeric) < FD_TOL

    def test_insufficient_samples(self, rng):
        with pytest.raises(InsufficientSamples):
            loss_frame(np.ones((1, 1, 3)), np.ones((1, 3)), np.zeros((3, 3)))


class TestLossNa:
    def test_all_rows_filtered(self, rng):
        p = softmax(rng.standard_normal((4, 12)) * 0.01, axis=1)  # near-uniform: high entropy
        value, skipped = weighted_entropy(p, entropy_threshold=0.05)
        assert value == 0.0 and skipped

        zq = unit_rows(rng, 4, 6) * 1e-3  # tiny logits: entropies near ln(N)
        out = loss_na(zq, unit_rows(rng, 12, 6), tau=1.0, entropy_threshold=0.05)
        assert out.value == 0.0 and out.skipped
        np.testing.assert_array_equal(out.grad_global, 0.0)

    def test_one_hot_row_weight_one_value_zero(self):
        p = np.array([[1.0, 0.0, 0.0]])
        value, skipped = weighted_entropy(p, entropy_threshold=0.5)
        assert value == 0.0 and not skipped

    def test_gradient_matches_fd(self, rng):
        zq = unit_rows(rng, 4, 8)
        gallery = unit_rows(rng, 16, 8)
        e_m = 0.9 * np.log(16)
        analytic = loss_na(zq, gallery, 0.02, e_m).grad_global
        numeric = central_difference(
            lambda x: loss_na(x, gallery, 0.02, e_m).value, zq.copy()
        )
        assert max_relative_error(analytic, numeric) < FD_TOL

    def test_value_below_threshold(self, rng):
        zq, gallery = unit_rows(rng, 6, 8), unit_rows(rng, 20, 8)
        e_m = np.log(20)
        out = loss_na(zq, gallery, 0.02, e_m)
        assert 0.0 <= out.value < e_m


class TestTotalLoss:
    def test_component_sum_and_omission(self, rng):
        inputs = random_inputs(rng)
        for mode in ("v2t", "t2v"):
            out = total_loss(inputs, LossConfig(mode=mode))
            names = ("inter", "intra", "global", "frame", "na") if mode == "v2t" else (
                "inter", "global", "na")
            assert abs(out.value - sum(out.components[k] for k in names)) < 1e-12
            if mode == "t2v":
                assert out.components["intra"] == 0.0 and out.components["frame"] == 0.0
                assert out.grad_frames is None

    def test_t2v_equals_three_term_sum(self, rng):
        inputs = random_inputs(rng)
        cfg = LossConfig(mode="t2v")
        out = total_loss(inputs, cfg)
        expected = (
            loss_inter(inputs.query_global, cfg.temperature).value
            + loss_global(inputs.query_global, inputs.pseudo_gallery, inputs.gap_target).value
            + loss_na(inputs.query_global, inputs.gallery, cfg.tau, inputs.entropy_threshold).value
        )
        assert abs(out.value - expected) < 1e-12

    def test_total_gradient_is_sum_of_components(self, rng):
        inputs = random_inputs(rng)
        cfg = LossConfig(mode="v2t")
        out = total_loss(inputs, cfg)
        grad_sum = (
            loss_inter(inputs.query_global, cfg.temperature).grad_global
            + loss_global(inputs.query_global, inputs.pseudo_gallery, inputs.gap_target).grad_global
            + loss_na(
                inputs.query_global, inputs.gallery, cfg.tau, inputs.entropy_threshold
            ).grad_global
        )
        np.testing.assert_allclose(out.grad_global, grad_sum, atol=1e-12)

    def test_total_gradient_matches_fd(self, rng):
        inputs = random_inputs(rng)
        cfg = LossConfig(mode="v2t")
        out = total_loss(inputs, cfg)

        def on_global(x):
            return total_loss(LossInputs(**{**inputs.__dict__, "query_global": x}), cfg).value

        def on_frames(x):
            return total_loss(LossInputs(**{**inputs.__dict__, "frames": x}), cfg).value

        assert max_relative_error(
            out.grad_global, central_difference(on_global, inputs.query_global.copy())
        ) < FD_TOL
        assert max_relative_error(
            out.grad_frames, central_difference(on_frames, inputs.frames.copy())
        ) < FD_TOL

    def test_batch_permutation_invariance(self, rng):
        inputs = random_inputs(rng)
        perm = rng.permutation(inputs.query_global.shape[0])
        permuted = LossInputs(
            query_global=inputs.query_global[perm],
            gallery=inputs.gallery,
            pseudo_gallery=inputs.pseudo_gallery[perm],
            gap_target=inputs.gap_target,
            cov_target=inputs.cov_target,
            entropy_threshold=inputs.entropy_threshold,
            frames=inputs.frames[perm],
        )
        cfg = LossConfig(mode="v2t")
        assert abs(total_loss(inputs, cfg).value - total_loss(permuted, cfg).value) < 1e-9

    def test_all_values_finite(self, rng):
        for _ in range(5):
            out = total_loss(random_inputs(rng), LossConfig(mode="v2t"))
            assert np.isfinite(out.value)
            assert np.all(np.isfinite(out.grad_global))
            assert np.all(np.isfinite(out.grad_frames))
