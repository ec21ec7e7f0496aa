import numpy as np
import pytest

from flexxnoise.frames import default_intrinsics
from flexxnoise.model import PRESETS, preset
from flexxnoise.scene import PlanarScene, render_scene


@pytest.fixture(scope="session")
def intr():
    return default_intrinsics()


@pytest.fixture(params=sorted(PRESETS))
def mode_id(request):
    return request.param


@pytest.fixture
def coeffs(mode_id):
    return preset(mode_id)


@pytest.fixture(scope="session")
def tilted_scene():
    return PlanarScene(1.2, 30.0, 0.25)


@pytest.fixture(scope="session")
def tilted_frame(tilted_scene, intr):
    return render_scene(tilted_scene, intr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
