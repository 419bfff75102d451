import numpy as np
import pytest

from gcpreg import synth
from gcpreg.core import RasterImage

# mild quadratic: ~5.2 px max displacement over a 512x512 frame
QUADRATIC = (0.5, 1.002, 0.001, 1.2e-5, -6e-6, 6e-6,
             -1.0, 0.002, 0.998, -6e-6, 1.2e-5, 6e-6)


@pytest.fixture(scope="session")
def reference():
    return synth.textured_reference(512, 512, seed=1)


@pytest.fixture(scope="session")
def small_reference():
    return synth.textured_reference(128, 128, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, shape, max_value=255):
    return RasterImage(rng.integers(0, max_value + 1, size=shape), max_value)
