"""Tests for the per-image fitting schedule"""

import numpy as np
import pytest

from facefit.energy.terms import photometric_error
from facefit.exceptions import ConfigError, DivergenceError
from facefit.optim.fitter import FitResult, Schedule, fit_image, init_params, initial_pose
from facefit.optim.params import BASE_BLOCKS, BLOCKS
from facefit.render import Level, render_state
from facefit.render.lighting import SH_C0


def _short(**overrides) -> Schedule:
    values = dict(pretrain_iterations=4, finetune_iterations=3, log_every=2)
    values.update(overrides)
    return Schedule(**values)


class TestSchedule:

    def test_defaults(self):
        schedule = Schedule()
        assert (schedule.pretrain_iterations, schedule.finetune_iterations) == (2000, 3000)
        assert schedule.total_iterations == 5000
        assert Schedule(stage="pretrain").total_iterations == 2000

    def test_rates(self):
        schedule = Schedule(lr_gain=1.0)
        assert set(schedule.pretrain_rates()) == set(BASE_BLOCKS)
        assert all(lr == 0.01 for lr in schedule.pretrain_rates().values())
        rates = schedule.finetune_rates()
        assert set(rates) == set(BLOCKS)
        assert (rates["alpha"], rates["delta_g"], rates["delta_r"]) == (0.001, 0.005, 0.01)
        assert set(schedule.corrective_rates()) == {"gamma_f", "delta_g", "delta_r"}
        assert Schedule(lr_gain=1.0, corrective_boost=2.0).theta_rate("theta_r") == 0.02

    @pytest.mark.parametrize("overrides", [
        {"stage": "both"},
        {"pretrain_iterations": -1},
        {"lr_geom": 0.0},
        {"batch_size": 0},
        {"log_every": 0},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            Schedule(**overrides)

    def test_ablation_reaches_both_stages(self):
        schedule = Schedule().with_ablation(["sparse"])
        assert not schedule.pretrain_weights.landmarks
        assert not schedule.finetune_weights.landmarks

    def test_to_dict_nests_weights(self):
        data = Schedule().to_dict()
        assert data["finetune_weights"]["w_ref"] == 13.0
        assert data["stage"] == "finetune"


class TestInitialization:

    def test_initial_pose_centres_the_mean_face(self, tiny_model, K):
        pose = initial_pose(tiny_model, K)
        centroid = tiny_model.mean_vertices().mean(axis=0) + pose.t
        np.testing.assert_allclose(centroid[:2], 0.0, atol=1e-12)
        assert centroid[2] > 0

    def test_init_params_matches_image_brightness(self, tiny_model, K):
        dark = init_params(tiny_model, np.full((K.height, K.width, 3), 0.2), K)
        bright = init_params(tiny_model, np.full((K.height, K.width, 3), 0.6), K)
        assert bright.gamma_b[0, 0] == pytest.approx(3.0 * dark.gamma_b[0, 0])
        np.testing.assert_array_equal(dark.gamma_f, dark.gamma_b)
        assert not dark.alpha.any() and not dark.delta_g.any()
        assert not dark.gamma_b[1:].any()

    def test_init_params_of_gray_image(self, tiny_model, K):
        params = init_params(tiny_model, np.full((K.height, K.width, 3), 0.5), K)
        state = render_state(tiny_model, params, K, Level.BASE)
        albedo = state.reflectance[state.visible].mean()
        assert params.gamma_b[0, 0] == pytest.approx(0.5 / (albedo * SH_C0))


class TestFitImage:
    """End-to-end fitting on a rendered scene"""

    def test_zero_iterations(self, tiny_model, K, scene):
        _, image, lms = scene
        result = fit_image(tiny_model, image, lms, K, _short(pretrain_iterations=0, finetune_iterations=0))
        assert len(result.trajectory) == 1
        assert result.iterations == 0

    def test_trajectory_layout(self, tiny_model, K, scene):
        _, image, lms = scene
        result = fit_image(tiny_model, image, lms, K, _short())
        assert len(result.trajectory) == 4 + 3 + 1
        assert result.stage_starts == {"pretrain": 0, "finetune": 5}
        assert result.stage_of(4) == "pretrain" and result.stage_of(5) == "finetune"
        assert len(result.sliding_history) == len(result.trajectory)
        assert np.isfinite(result.photo_base) and np.isfinite(result.photo_final)

    def test_best_so_far_is_monotone(self, tiny_model, K, scene):
        _, image, lms = scene
        result = fit_image(tiny_model, image, lms, K, _short())
        assert np.all(np.diff(result.best_so_far) <= 0)

    def test_pretrain_only_keeps_the_corrections_off(self, tiny_model, K, scene):
        _, image, lms = scene
        result = fit_image(tiny_model, image, lms, K, _short(stage="pretrain"))
        assert len(result.trajectory) == 5
        assert not result.params.delta_g.any() and not result.params.delta_r.any()
        np.testing.assert_array_equal(result.params.gamma_f, result.params.gamma_b)
        assert result.photo_final == result.photo_base

    def test_deterministic(self, tiny_model, K, scene):
        _, image, lms = scene
        a = fit_image(tiny_model, image, lms, K, _short())
        b = fit_image(tiny_model, image, lms, K, _short())
        np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())
        np.testing.assert_array_equal(a.totals, b.totals)

    def test_without_landmarks(self, tiny_model, K, scene):
        _, image, _ = scene
        result = fit_image(tiny_model, image, None, K, _short())
        assert all(report.sparse == 0.0 for report in result.trajectory)
        assert result.sliding_history == []

    def test_image_size_mismatch(self, tiny_model, K, scene):
        _, image, lms = scene
        with pytest.raises(ConfigError):
            fit_image(tiny_model, image[:-2], lms, K, _short())

    def test_divergence_guard(self, tiny_model, K, scene):
        _, image, lms = scene
        with pytest.raises(DivergenceError) as info:
            fit_image(tiny_model, image, lms, K, _short(divergence_factor=1e-9))
        assert len(info.value.trajectory) == 2

    def test_result_dict_round_trip(self, tiny_model, K, scene):
        _, image, lms = scene
        result = fit_image(tiny_model, image, lms, K, _short())
        restored = FitResult.from_dict(result.to_dict())
        np.testing.assert_array_equal(restored.params.flatten(), result.params.flatten())
        np.testing.assert_array_equal(restored.totals, result.totals)
        assert restored.stage_starts == result.stage_starts
        assert restored.photo_final == result.photo_final

    @pytest.mark.slow
    @pytest.mark.integration
    def test_fit_improves_on_the_initialization(self, tiny_model, K, scene):
        _, image, lms = scene
        start = init_params(tiny_model, image, K)
        start_error = photometric_error(render_state(tiny_model, start, K, Level.BASE), image)
        result = fit_image(tiny_model, image, lms, K, Schedule(pretrain_iterations=150, finetune_iterations=50))
        assert result.photo_base < start_error
        assert result.best_so_far[-1] < result.totals[0]
