"""Shared test fixtures and configuration"""

import numpy as np
import pytest

from facefit.energy.weights import Weights
from facefit.landmarks import LandmarkSet
from facefit.model.corrective import CorrectiveVariant
from facefit.model.synth import synth_model
from facefit.optim.corpus import BumpSpec, Corpus, CorpusItem, PatchSpec, render_sample, sample_truth
from facefit.render.camera import CameraIntrinsics
from facefit.services.config_service import ConfigService

# Small enough for finite differences, large enough for a closed, lit head
TINY_VERTICES = 150
TINY_DIMS = (4, 2, 4, 3)
IMAGE_SIZE = 48


def make_model(seed: int = 3, corrective_dim: int = TINY_DIMS[3],
               variant: CorrectiveVariant = CorrectiveVariant.LINEAR, hidden_dim=None):
    m_s, m_e, m_r, _ = TINY_DIMS
    return synth_model(seed, TINY_VERTICES, m_s, m_e, m_r, corrective_dim, variant, hidden_dim)


def make_corpus(model, K, count: int = 3, seed: int = 17):
    """In-memory corpus rendered with the default bump and chin patch"""
    rng = np.random.default_rng(seed)
    geometry_offset = BumpSpec().displacement(model)
    reflectance_offset = PatchSpec().offsets(model)
    items = []
    for index in range(count):
        truth = sample_truth(model, rng, K)
        image, state = render_sample(model, truth, K, geometry_offset, reflectance_offset)
        lms = LandmarkSet.from_topology(state.pixels[model.topology.anchor_vertices], model.topology)
        items.append(CorpusItem(f"{index:05d}", image, lms, truth))
    return Corpus(items, K)


@pytest.fixture
def tiny_model():
    """Synthetic model with ~150 vertices and C = 3"""
    return make_model()


@pytest.fixture
def K():
    return CameraIntrinsics.default_for(IMAGE_SIZE, IMAGE_SIZE)


@pytest.fixture
def scene(tiny_model, K):
    """(true params, rendered image, exact landmarks) for the tiny model"""
    rng = np.random.default_rng(11)
    truth = sample_truth(tiny_model, rng, K)
    image, state = render_sample(tiny_model, truth, K, bleed=True)
    lms = LandmarkSet.from_topology(state.pixels[tiny_model.topology.anchor_vertices], tiny_model.topology)
    return truth, image, lms


@pytest.fixture
def weights():
    return Weights.finetune()


@pytest.fixture(autouse=True)
def reset_config_singleton():
    """Every test starts without a cached configuration"""
    ConfigService._instance = None
    yield
    ConfigService._instance = None
