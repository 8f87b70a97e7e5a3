import numpy as np
import pytest

from nirfuse.image import Image, ImageKind


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_rgb(rng, height=12, width=16) -> Image:
    return Image(rng.random((3, height, width)), ImageKind.RGB)


def random_nir(rng, height=12, width=16) -> Image:
    return Image(rng.random((height, width)), ImageKind.NIR)
