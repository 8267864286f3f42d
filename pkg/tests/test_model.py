"""Tests for the multi-level model: topology, base model, correctives"""

import numpy as np
import pytest

from facefit.exceptions import DimensionError, InvalidModelError
from facefit.model import (AffineLayer, CorrectiveMap, CorrectiveVariant, MeshTopology, eval_base_geometry,
                           eval_base_reflectance, eval_corrective, eval_final, reinitialize_correctives,
                           synth_model)
from facefit.model.topology import uv_ellipsoid

from tests.conftest import TINY_DIMS, TINY_VERTICES, make_model


class TestTopology:
    """Mesh generation and derived connectivity"""

    def test_ellipsoid_is_closed_manifold(self):
        positions, triangles = uv_ellipsoid(200)
        topology = MeshTopology(len(positions), triangles, skin_mask=[0], contour_candidates=[0])
        pairs = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
        _, counts = np.unique(pairs, axis=0, return_counts=True)
        assert np.all(counts == 2)
        # Euler characteristic of a sphere
        assert len(positions) - len(topology.edges) + len(triangles) == 2

    def test_ellipsoid_triangles_face_outward(self):
        positions, triangles = uv_ellipsoid(120)
        corners = positions[triangles]
        normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        assert np.all(np.einsum("ij,ij->i", normals, corners.mean(axis=1)) > 0)

    def test_too_small_mesh_rejected(self):
        with pytest.raises(InvalidModelError):
            uv_ellipsoid(5)

    def test_laplacian_annihilates_constants(self, tiny_model):
        constant = np.tile([0.3, -1.0, 2.0], (tiny_model.vertex_count, 1))
        assert np.abs(tiny_model.topology.laplacian @ constant).max() < 1e-12

    def test_one_ring_is_symmetric(self, tiny_model):
        ring = tiny_model.topology.one_ring
        for i, neighbours in enumerate(ring):
            for j in neighbours:
                assert i in ring[j]

    def test_validate_rejects_out_of_range_triangle(self):
        topology = MeshTopology(3, [[0, 1, 5]], skin_mask=[0], contour_candidates=[0])
        with pytest.raises(InvalidModelError):
            topology.validate()

    def test_validate_rejects_non_manifold_edge(self):
        topology = MeshTopology(5, [[0, 1, 2], [0, 1, 3], [1, 0, 4]], skin_mask=[0], contour_candidates=[0])
        with pytest.raises(InvalidModelError):
            topology.validate()

    def test_validate_rejects_empty_skin_mask(self):
        positions, triangles = uv_ellipsoid(50)
        topology = MeshTopology(len(positions), triangles, skin_mask=[], contour_candidates=[0])
        with pytest.raises(InvalidModelError):
            topology.validate()


class TestBaseModel:
    """Affine geometry and reflectance"""

    def test_zero_coefficients_give_the_mean(self, tiny_model):
        base = tiny_model.base
        np.testing.assert_array_equal(eval_base_geometry(base, np.zeros(base.geometry_dim)), base.a_g)
        np.testing.assert_array_equal(eval_base_reflectance(base, np.zeros(base.m_r)), base.a_r)

    def test_unit_coefficient_adds_its_column(self, tiny_model):
        base = tiny_model.base
        alpha = np.zeros(base.geometry_dim)
        alpha[2] = 1.0
        np.testing.assert_allclose(eval_base_geometry(base, alpha), base.a_g + base.B_g[:, 2])

    def test_wrong_length_rejected(self, tiny_model):
        with pytest.raises(DimensionError):
            eval_base_geometry(tiny_model.base, np.zeros(tiny_model.base.geometry_dim + 1))
        with pytest.raises(DimensionError):
            eval_base_reflectance(tiny_model.base, np.zeros(2))

    def test_non_finite_coefficients_rejected(self, tiny_model):
        beta = np.zeros(tiny_model.base.m_r)
        beta[0] = np.nan
        with pytest.raises(DimensionError):
            eval_base_reflectance(tiny_model.base, beta)

    def test_non_positive_sigma_invalid(self, tiny_model):
        tiny_model.base.sigma_r[0] = 0.0
        with pytest.raises(InvalidModelError):
            tiny_model.validate()


class TestCorrectives:
    """Corrective maps and the final level"""

    def test_one_nl_hand_example(self):
        corrective = CorrectiveMap(CorrectiveVariant.ONE_NL, [
            AffineLayer(np.eye(2), np.array([0.0, -1.0])),
            AffineLayer(np.array([[1.0, 1.0], [2.0, 0.0], [0.0, 3.0]]), np.array([0.0, 0.0, 1.0])),
        ])
        # hidden pre-activation (2, -0.5) -> ReLU (2, 0)
        np.testing.assert_array_equal(eval_corrective(corrective, [2.0, 0.5]), [2.0, 4.0, 1.0])

    def test_two_nl_hand_example(self):
        corrective = CorrectiveMap(CorrectiveVariant.TWO_NL, [
            AffineLayer(np.eye(2), np.array([0.0, -1.0])),
            AffineLayer(np.array([[1.0, -1.0], [0.0, 1.0]]), np.array([-3.0, 0.5])),
            AffineLayer(np.array([[1.0, 2.0], [3.0, 0.0], [0.0, 4.0]]), np.array([1.0, 0.0, 0.0])),
        ])
        # (2, -0.5) -> ReLU (2, 0) -> (-1, 0.5) -> ReLU (0, 0.5)
        np.testing.assert_array_equal(eval_corrective(corrective, [2.0, 0.5]), [2.0, 0.0, 2.0])

    def test_linear_is_affine(self):
        rng = np.random.default_rng(0)
        corrective = CorrectiveMap.initialize(CorrectiveVariant.LINEAR, 4, 9, rng)
        corrective.layers[0].bias[:] = rng.standard_normal(9)
        a, b = rng.standard_normal(4), rng.standard_normal(4)
        fa, fb, f0 = (eval_corrective(corrective, d) for d in (a, b, np.zeros(4)))
        np.testing.assert_allclose(eval_corrective(corrective, a + b), fa + fb - f0, atol=1e-12)

    @pytest.mark.parametrize("variant", list(CorrectiveVariant))
    def test_layer_count_and_shapes(self, variant):
        rng = np.random.default_rng(1)
        corrective = CorrectiveMap.initialize(variant, 5, 30, rng, hidden_dim=7)
        assert len(corrective.layers) == variant.layer_count
        assert corrective.input_dim == 5
        assert corrective.output_dim == 30
        if variant is not CorrectiveVariant.LINEAR:
            assert corrective.layers[0].matrix.shape == (7, 5)

    @pytest.mark.parametrize("variant", list(CorrectiveVariant))
    def test_backward_matches_finite_differences(self, variant):
        rng = np.random.default_rng(2)
        corrective = CorrectiveMap.initialize(variant, 3, 6, rng, hidden_dim=4, scale=0.5)
        for layer in corrective.layers[:-1]:
            layer.bias[:] = rng.uniform(0.3, 1.0, layer.bias.shape)
        delta = rng.standard_normal(3)
        weights = rng.standard_normal(6)
        out, cache = corrective.forward(delta)
        analytic, layer_grads = corrective.backward(cache, weights, with_layers=True)

        h = 1e-6
        numeric = np.array([(weights @ eval_corrective(corrective, delta + h * e)
                             - weights @ eval_corrective(corrective, delta - h * e)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-9)
        assert [g.matrix.shape for g in layer_grads] == [layer.matrix.shape for layer in corrective.layers]

    def test_nan_layer_is_invalid(self, tiny_model):
        tiny_model.geom_corr.layers[0].matrix[0, 0] = np.nan
        with pytest.raises(InvalidModelError):
            tiny_model.validate()

    def test_initial_final_level_equals_base(self, tiny_model):
        base = tiny_model.base
        alpha, beta = 0.1 * base.sigma_g, -0.2 * base.sigma_r
        c = tiny_model.corrective_dim
        v, r = eval_final(tiny_model, alpha, beta, np.zeros(c), np.zeros(c))
        np.testing.assert_array_equal(v, eval_base_geometry(base, alpha))
        np.testing.assert_array_equal(r, eval_base_reflectance(base, beta))

    def test_zero_dimension_disables_correctives(self):
        model = make_model(corrective_dim=0)
        assert not model.geom_corr.enabled
        v, r = eval_final(model, np.zeros(model.base.geometry_dim), np.zeros(model.base.m_r), [], [])
        np.testing.assert_array_equal(v, model.base.a_g)
        np.testing.assert_array_equal(r, model.base.a_r)

    def test_delta_of_wrong_length_rejected(self, tiny_model):
        with pytest.raises(DimensionError):
            eval_corrective(tiny_model.geom_corr, np.zeros(tiny_model.corrective_dim + 2))

    def test_reinitialize_changes_variant_and_size(self, tiny_model):
        model = reinitialize_correctives(tiny_model, CorrectiveVariant.TWO_NL, 5, seed=0)
        assert model.variant is CorrectiveVariant.TWO_NL
        assert model.corrective_dim == 5
        assert model.base is tiny_model.base
        model.validate()


class TestSynthModel:
    """Deterministic synthetic model"""

    def test_same_seed_same_model(self):
        a, b = make_model(seed=5), make_model(seed=5)
        np.testing.assert_array_equal(a.base.B_g, b.base.B_g)
        np.testing.assert_array_equal(a.geom_corr.layers[0].matrix, b.geom_corr.layers[0].matrix)

    def test_dimensions(self, tiny_model):
        m_s, m_e, m_r, c = TINY_DIMS
        assert abs(tiny_model.vertex_count - TINY_VERTICES) < 20
        assert tiny_model.base.B_g.shape == (3 * tiny_model.vertex_count, m_s + m_e)
        assert tiny_model.base.B_r.shape == (3 * tiny_model.vertex_count, m_r)
        assert tiny_model.corrective_dim == c

    def test_sigmas_positive_and_decreasing(self, tiny_model):
        sigma = tiny_model.base.sigma_g
        assert np.all(sigma > 0)
        assert np.all(np.diff(sigma) < 0)

    def test_landmark_anchors_cover_both_kinds(self, tiny_model):
        mask = tiny_model.topology.fixed_anchor_mask
        assert mask.any() and (~mask).any()
        assert set(tiny_model.topology.anchor_vertices[~mask]) <= set(tiny_model.topology.contour_candidates)

    def test_different_seeds_give_different_bases(self):
        a = synth_model(1, 500, 8, 4, 8, 3)
        b = synth_model(2, 500, 8, 4, 8, 3)
        assert a.base.B_g.shape == b.base.B_g.shape
        assert not np.allclose(a.base.B_g, b.base.B_g)

    def test_mean_reflectance_is_strictly_inside_the_unit_interval(self):
        a_r = synth_model(1, 500, 8, 4, 8, 3).base.a_r
        assert np.all(a_r > 0.0) and np.all(a_r < 1.0)
