from __future__ import annotations

import numpy as np
import pytest

from wmadv.imaging import ImageTensor


def rand_image(rng: np.random.Generator, width: int, height: int) -> ImageTensor:
    return ImageTensor(rng.uniform(0.0, 255.0, size=(3, height, width)))


def rand_plane(rng: np.random.Generator, n: int, m: int | None = None) -> np.ndarray:
    return rng.uniform(-300.0, 300.0, size=(n, m if m is not None else n))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0xC0FFEE)
