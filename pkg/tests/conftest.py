import numpy as np
import pytest

from camocount.synth import SceneSpec, generate_split


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """8/2/4 split of 64x64 scenes with 2..8 objects each."""
    root = tmp_path_factory.mktemp("tinyds")
    template = SceneSpec(width=64, height=64, indiscernibility=0.35,
                         radius_range=(3.0, 5.0), min_separation=8.0)
    generate_split(template, {"train": 8, "val": 2, "test": 4}, seed=9,
                   out_dir=root, count_range=(2, 8))
    return root
