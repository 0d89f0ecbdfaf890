from pathlib import Path

import numpy as np
import pytest

from jfdkit import GrayImage, MasterKey, read_pgm

DATA = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture(scope="session")
def tissue() -> GrayImage:
    return read_pgm(DATA / "tissue.pgm")


@pytest.fixture(scope="session")
def gravel() -> GrayImage:
    return read_pgm(DATA / "gravel.pgm")


@pytest.fixture(scope="session")
def gradient() -> GrayImage:
    return read_pgm(DATA / "gradient.pgm")


@pytest.fixture(scope="session")
def natural_images(tissue, gravel):
    return [("tissue", tissue), ("gravel", gravel)]


@pytest.fixture(scope="session")
def tissue_128(tissue) -> GrayImage:
    return GrayImage(tissue.pixels[192:320, 192:320].copy())


@pytest.fixture(scope="session")
def tissue_256(tissue) -> GrayImage:
    return GrayImage(tissue.pixels[128:384, 128:384].copy())


@pytest.fixture(scope="session")
def master() -> MasterKey:
    return MasterKey(bytes(range(16)))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
