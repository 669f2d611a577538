import numpy as np
import pytest

from app.schemas.camera import CameraRig
from app.schemas.sensor import RefractionParams, SkinParams
from app.services.stereo_geometry import load_rig


@pytest.fixture
def ideal_rig() -> CameraRig:
    """Rectified, distortion-free rig with the default baseline and focal length."""
    return CameraRig.ideal()


@pytest.fixture
def table_rig() -> CameraRig:
    """The shipped rig with real distortion and a rotated right camera."""
    return load_rig()


@pytest.fixture
def skin() -> SkinParams:
    return SkinParams()


@pytest.fixture
def refr() -> RefractionParams:
    return RefractionParams()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
