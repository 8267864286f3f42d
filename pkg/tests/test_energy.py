"""Tests for energy weights, the individual terms and their assembly"""

from types import SimpleNamespace

import numpy as np
import pytest

from facefit.energy.terms import (chroma_weights, e_glo, e_ref, e_smo, e_sparse, e_sta, e_std, photo_level,
                                  photometric_error, sample_glo_pairs)
from facefit.energy.total import TERMS, EnergyContext, EnergyReport, e_total, forward
from facefit.energy.weights import Weights
from facefit.exceptions import ConfigError, GradientError
from facefit.landmarks import LandmarkSet
from facefit.model.topology import AnchorKind, MeshTopology
from facefit.render.pipeline import Level


def _triangle():
    return MeshTopology(3, [[0, 1, 2]], skin_mask=[0, 1, 2], contour_candidates=[0])


def _state(pixels, visible, colors=None):
    pixels = np.asarray(pixels, dtype=float)
    visible = np.asarray(visible, dtype=bool)
    return SimpleNamespace(pixels=pixels, visible=visible, visible_indices=np.flatnonzero(visible),
                           vertex_count=len(pixels), level=Level.BASE,
                           colors=np.zeros((len(pixels), 3)) if colors is None else np.asarray(colors))


class TestWeights:

    def test_defaults(self):
        w = Weights()
        assert (w.w_photo, w.w_reg, w.w_smo, w.w_ref, w.w_glo, w.w_sta) == (0.2, 0.003, 3.2e4, 13.0, 80.0, 0.08)
        assert w.chroma_alpha == 50.0 and w.p_exp == 0.9

    def test_pretrain_switches_off_final_level_terms(self):
        w = Weights.for_stage("pretrain")
        assert w.w_photo == 1.9 and w.w_reg == 3e-5
        assert w.w_smo == w.w_ref == w.w_glo == w.w_sta == 0.0
        assert not w.final_photo

    def test_unknown_stage(self):
        with pytest.raises(ConfigError):
            Weights.for_stage("warmup")

    @pytest.mark.parametrize("overrides", [{"w_ref": -1.0}, {"p_exp": 0.0}, {"p_exp": 1.5}, {"eps_l21": 0.0}])
    def test_invalid_values_rejected(self, overrides):
        with pytest.raises(ConfigError):
            Weights().with_overrides(**overrides)

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            Weights().with_overrides(w_magic=1.0)

    def test_ablate(self):
        w = Weights().ablate(["smo", "sparse", "photo"])
        assert w.w_smo == 0.0 and w.w_photo == 0.0
        assert not w.landmarks
        assert w.w_ref == 13.0

    def test_ablate_unknown_term(self):
        with pytest.raises(ConfigError):
            Weights().ablate(["std"])

    def test_from_file(self, tmp_path):
        path = tmp_path / "weights.txt"
        path.write_text("# tuned\nw_ref = 5   # sharper\n\nfinal_photo = off\np_exp=0.5\n", encoding="utf-8")
        w = Weights.from_file(path)
        assert w.w_ref == 5.0 and w.p_exp == 0.5
        assert w.final_photo is False
        assert w.w_glo == 80.0

    def test_from_file_applies_to_base(self, tmp_path):
        path = tmp_path / "weights.txt"
        path.write_text("w_sta = 1\n", encoding="utf-8")
        w = Weights.from_file(path, base=Weights.pretrain())
        assert w.w_sta == 1.0 and w.w_photo == 1.9

    @pytest.mark.parametrize("content", ["w_ref 5\n", "w_unknown = 1\n", "final_photo = maybe\n", "w_ref = x\n"])
    def test_bad_weight_files(self, tmp_path, content):
        path = tmp_path / "weights.txt"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(ConfigError):
            Weights.from_file(path)

    def test_missing_weight_file(self, tmp_path):
        with pytest.raises(ConfigError):
            Weights.from_file(tmp_path / "nope.txt")

    def test_dict_round_trip(self):
        w = Weights(w_ref=2.5, chroma_normalized=True)
        assert Weights.from_dict(w.to_dict()) == w


class TestTerms:
    """Each term on hand-built inputs"""

    def test_sparse(self):
        lms = LandmarkSet([[1.0, 2.0], [3.0, 4.0]], [1.0, 0.5], [AnchorKind.FIXED] * 2, [0, 1])
        state = _state([[0.0, 2.0], [3.0, 2.0]], [True, True])
        # (1 * 1 + 0.5 * 4) / 2
        assert e_sparse(state, lms) == pytest.approx(1.5)

    def test_sparse_without_landmarks(self):
        assert e_sparse(_state([[0.0, 0.0]], [True]), None) == 0.0

    def test_std_at_one_sigma(self, tiny_model, weights):
        base = tiny_model.base
        assert e_std(base.sigma_g, np.zeros(base.m_r), base, weights) == pytest.approx(base.geometry_dim)
        assert e_std(np.zeros(base.geometry_dim), -base.sigma_r, base, weights) == pytest.approx(
            weights.w_rstd * base.m_r)

    def test_smoothness_of_constant_field(self, tiny_model, weights):
        field = np.tile([0.1, 0.2, -0.3], (tiny_model.vertex_count, 1))
        assert e_smo(field, tiny_model.topology, weights) == pytest.approx(0.0, abs=1e-18)

    def test_smoothness_of_bump_is_positive(self, tiny_model, weights):
        field = np.zeros((tiny_model.vertex_count, 3))
        field[0] = 1.0
        assert e_smo(field, tiny_model.topology, weights) > 0.0

    def test_stability(self, weights):
        assert e_sta(np.ones((10, 3)), weights) == pytest.approx(3.0 * weights.w_sta)

    def test_ref_with_unit_exponent(self):
        w = Weights(w_ref=1.0, p_exp=1.0, eps_p=1e-12)
        r = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        # edges (0,1), (0,2), (1,2) have lengths 1, 0, 1; each counted twice over N = 3
        assert e_ref(r, _triangle(), np.ones(3), w) == pytest.approx(4.0 / 3.0, rel=1e-5)

    def test_ref_respects_chroma_weights(self):
        w = Weights(w_ref=1.0, p_exp=1.0, eps_p=1e-12)
        r = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert e_ref(r, _triangle(), np.array([0.0, 1.0, 0.0]), w) == pytest.approx(0.0, abs=1e-5)

    def test_glo_of_constant_reflectance(self, tiny_model, weights):
        topology = tiny_model.topology
        samples = sample_glo_pairs(topology, seed=0)
        r = np.tile([0.6, 0.4, 0.3], (tiny_model.vertex_count, 1))
        assert e_glo(r, topology.skin_mask, samples, weights) == 0.0

    def test_glo_samples_stay_in_the_skin_mask(self, tiny_model):
        samples = sample_glo_pairs(tiny_model.topology, seed=4)
        assert samples.shape == (len(tiny_model.topology.skin_mask), 6)
        assert set(samples.ravel()) <= set(tiny_model.topology.skin_mask)
        np.testing.assert_array_equal(samples, sample_glo_pairs(tiny_model.topology, seed=4))

    def test_chroma_weights(self, weights):
        image = np.zeros((2, 2, 3))
        image[0, 1] = [0.1, 0.0, 0.0]
        state = _state([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [True, True, False])
        w_ij = chroma_weights(image, state, _triangle(), weights)
        np.testing.assert_allclose(w_ij, [np.exp(-5.0), np.exp(-50.0), np.exp(-50.0)])

    def test_photo_level(self):
        image = np.full((4, 4, 3), 0.5)
        colors = np.array([[0.5] * 3, [0.0] * 3, [0.2] * 3, [0.0] * 3])
        state = _state([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], [True, False, True, False], colors)
        level = photo_level(state, image, eps_l21=1e-4)
        expected = (1e-4 + np.sqrt(0.27 + 1e-8)) / 4
        assert level.value == pytest.approx(expected)
        np.testing.assert_array_equal(level.indices, [0, 2])

    def test_photo_level_without_visible_vertices(self):
        state = _state([[0.0, 0.0]], [False])
        assert photo_level(state, np.zeros((2, 2, 3)), 1e-4).value == 0.0
        assert np.isnan(photometric_error(state, np.zeros((2, 2, 3))))


class TestTotal:
    """Assembly and the energy context"""

    def test_report_arithmetic(self, weights):
        terms = dict(zip(TERMS, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]))
        report = EnergyReport.assemble(terms, weights)
        assert report.data == pytest.approx(3.0 + 0.2 * 3.0)
        assert report.reg == pytest.approx(30.0)
        assert report.total == pytest.approx(3.6 + 0.003 * 30.0)
        assert sum(report.weighted_terms(weights).values()) == pytest.approx(report.total)

    def test_energy_at_the_truth(self, tiny_model, K, scene, weights):
        truth, image, lms = scene
        ctx = EnergyContext.create(tiny_model, image, K, weights, lms)
        report = e_total(ctx, truth)
        assert np.isfinite(report.total)
        # exact landmarks and zero corrections
        assert report.sparse == pytest.approx(0.0, abs=1e-20)
        assert report.smo == 0.0 and report.sta == 0.0
        assert report.photo_base == report.photo_final
        assert report.total == pytest.approx(report.data + weights.w_reg * report.reg)

    def test_pretrain_has_no_final_photometric_term(self, tiny_model, K, scene):
        truth, image, lms = scene
        ctx = EnergyContext.create(tiny_model, image, K, Weights.pretrain(), lms)
        assert e_total(ctx, truth).photo_final == 0.0

    def test_ablated_landmarks(self, tiny_model, K, scene):
        truth, image, lms = scene
        truth = truth.copy()
        truth.t = truth.t + [0.05, 0.0, 0.0]
        ctx = EnergyContext.create(tiny_model, image, K, Weights().ablate(["sparse"]), lms)
        assert e_total(ctx, truth).sparse == 0.0
        with_lms = EnergyContext.create(tiny_model, image, K, Weights(), lms)
        assert e_total(with_lms, truth).sparse > 0.0

    def test_nan_illumination_names_the_term(self, tiny_model, K, scene, weights):
        truth, image, lms = scene
        truth = truth.copy()
        truth.gamma_b[0, 0] = np.nan
        ctx = EnergyContext.create(tiny_model, image, K, weights, lms)
        with pytest.raises(GradientError) as info:
            e_total(ctx, truth)
        assert info.value.term == "photo_base"

    def test_refreshed_context_has_edge_weights(self, tiny_model, K, scene, weights):
        truth, image, lms = scene
        ctx = EnergyContext.create(tiny_model, image, K, weights, lms).refreshed(truth)
        assert ctx.chroma.shape == (len(tiny_model.topology.edges),)
        assert np.all((ctx.chroma > 0.0) & (ctx.chroma <= 1.0))

    def test_frozen_context_pins_visibility(self, tiny_model, K, scene, weights):
        truth, image, lms = scene
        ctx = EnergyContext.create(tiny_model, image, K, weights, lms).frozen(truth)
        moved = truth.copy()
        moved.omega = moved.omega + [0.0, 0.4, 0.0]
        tape = forward(ctx, moved)
        np.testing.assert_array_equal(tape.base.visible, ctx.visible_base)
        np.testing.assert_array_equal(tape.final.visible, ctx.visible_final)
