"""Tests for the analytic gradient and the finite-difference checker"""

import numpy as np
import pytest

from facefit.energy.total import EnergyContext, e_total
from facefit.energy.weights import Weights
from facefit.model.corrective import CorrectiveVariant
from facefit.optim.gradcheck import (MAGNITUDE_FLOOR, compare, finite_diff, gradcheck, random_instance,
                                     relative_errors)
from facefit.optim.gradients import grad_total
from facefit.optim.params import BLOCKS, ParamVector

from tests.conftest import IMAGE_SIZE, TINY_DIMS, TINY_VERTICES, make_model


@pytest.fixture
def instance(tiny_model, K):
    rng = np.random.default_rng(8)
    params, image, lms = random_instance(tiny_model, rng, K)
    ctx = EnergyContext.create(tiny_model, image, K, Weights.finetune(), lms).refreshed(params).frozen(params)
    return ctx, params


class TestGradcheck:
    """Analytic partials against central differences"""

    @pytest.mark.parametrize("variant", list(CorrectiveVariant))
    def test_every_block_agrees(self, variant):
        report = gradcheck(seed=1, n_vertices=TINY_VERTICES, dims=TINY_DIMS, variant=variant,
                           image_size=IMAGE_SIZE)
        assert report.passed, report.table()
        names = {b.block for b in report.blocks}
        assert set(BLOCKS) <= names
        assert f"theta_g[{variant.layer_count - 1}].m" in names

    def test_pretraining_weights_agree(self):
        report = gradcheck(seed=2, n_vertices=TINY_VERTICES, dims=TINY_DIMS, image_size=IMAGE_SIZE,
                           weights=Weights.pretrain())
        assert report.passed, report.table()

    def test_corrupted_derivative_is_detected(self):
        numeric = np.array([1.0, -0.5, 2e-3])
        corrupted = numeric.copy()
        corrupted[1] *= 1.01
        check = compare("alpha", corrupted, numeric, tolerance=1e-3)
        assert not check.passed
        assert check.max_rel_error == pytest.approx(0.01 / 1.01)
        assert compare("alpha", numeric, numeric, tolerance=1e-3).passed

    def test_tiny_components_are_not_compared(self):
        errors = relative_errors([0.5 * MAGNITUDE_FLOOR, 1.0], [0.0, 1.0])
        assert len(errors) == 1

    def test_report_round_trip(self, tmp_path):
        report = gradcheck(seed=3, n_vertices=TINY_VERTICES, dims=TINY_DIMS, image_size=IMAGE_SIZE,
                           theta_samples=4)
        path = tmp_path / "gradcheck.json"
        report.save(path)
        assert path.exists()
        assert report.to_dict()["passed"] == report.passed
        assert "overall" in report.table()

    def test_finite_diff_of_a_quadratic(self, tiny_model):
        params = ParamVector.zeros(tiny_model)
        params.alpha[:] = np.arange(len(params.alpha), dtype=float)

        def energy(p):
            return float(p.alpha @ p.alpha)

        grad = finite_diff(energy, params, blocks=("alpha",))
        np.testing.assert_allclose(grad.alpha, 2.0 * params.alpha, rtol=1e-6, atol=1e-6)
        assert not grad.beta.any()


class TestGradTotal:

    def test_value_is_the_energy(self, instance):
        ctx, params = instance
        total, _ = grad_total(ctx, params)
        assert total == e_total(ctx, params).total

    def test_fit_mode_has_no_layer_gradients(self, instance):
        ctx, params = instance
        _, grad = grad_total(ctx, params, mode="fit")
        assert grad.theta_g is None and grad.theta_r is None

    def test_train_mode_layer_gradients_match_layers(self, instance, tiny_model):
        ctx, params = instance
        _, grad = grad_total(ctx, params, mode="train")
        assert [g.matrix.shape for g in grad.theta_g] == [l.matrix.shape for l in tiny_model.geom_corr.layers]
        assert [g.bias.shape for g in grad.theta_r] == [l.bias.shape for l in tiny_model.refl_corr.layers]

    def test_fit_and_train_agree_on_x(self, instance):
        ctx, params = instance
        _, fit = grad_total(ctx, params, mode="fit")
        _, train = grad_total(ctx, params, mode="train")
        np.testing.assert_array_equal(fit.flatten(), train.flatten())

    def test_unknown_mode(self, instance):
        ctx, params = instance
        with pytest.raises(ValueError):
            grad_total(ctx, params, mode="adam")

    def test_without_correctives(self, K):
        model = make_model(corrective_dim=0)
        params, image, lms = random_instance(model, np.random.default_rng(5), K)
        ctx = EnergyContext.create(model, image, K, Weights.finetune(), lms)
        total, grad = grad_total(ctx, params, mode="train")
        assert np.isfinite(total)
        assert grad.delta_g.shape == (0,) and grad.delta_r.shape == (0,)
        assert grad.is_finite()

    def test_pretraining_leaves_final_level_blocks_alone(self, tiny_model, K):
        params, image, lms = random_instance(tiny_model, np.random.default_rng(6), K)
        ctx = EnergyContext.create(tiny_model, image, K, Weights.pretrain(), lms)
        _, grad = grad_total(ctx, params)
        assert not grad.gamma_f.any()
        assert not grad.delta_g.any() and not grad.delta_r.any()
        assert grad.alpha.any()
