"""Shared fixtures for the harmkit test suite."""

import numpy as np
import pytest

from harmkit.imaging import ImageBuffer
from harmkit.toydata import make_toy_corpus


@pytest.fixture(scope="session")
def toy_image() -> ImageBuffer:
    """One deterministic 32x32 RGB image."""
    return make_toy_corpus(1, 32, 32, seed=7)[0]


@pytest.fixture(scope="session")
def toy_corpus() -> list[ImageBuffer]:
    """Four deterministic 32x32 RGB images."""
    return make_toy_corpus(4, 32, 32, seed=11)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_image(rng: np.random.Generator, h: int = 16, w: int = 16, c: int = 3) -> ImageBuffer:
    """Uniform-random image buffer, handy for property loops."""
    return ImageBuffer(rng.uniform(0.0, 1.0, size=(h, w, c)))
