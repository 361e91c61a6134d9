import numpy as np
import pytest

from config.presets import HANDCRAFTED, ORACLE
from pipeline.refinement import DenoiseConfig
from pipeline.registrar import PipelineConfig
from services.feature_service import FeatureBackend
from services.shape_generator import generate_shape

collect_ignore = ["examples"]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lshape():
    return generate_shape("lshape", 256, seed=3)


@pytest.fixture
def oracle():
    return FeatureBackend(ORACLE, seed=0)


@pytest.fixture
def handcrafted():
    return FeatureBackend(HANDCRAFTED)


@pytest.fixture
def small_pipeline():
    """256 candidates per side: every point survives sampling, so ids stay paired under noise."""
    return PipelineConfig(input_size=256, subsample_chain=(256,), k=128, denoise=DenoiseConfig(p=15))


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
