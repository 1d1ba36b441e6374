import os

import numpy as np
import pytest

from cdgnet.config import Config
from cdgnet.data.blur import synth_pair
from cdgnet.data.dataset import make_pair
from cdgnet.data.io import save_image


def pytest_collection_modifyitems(config, items):
    if os.getenv("CDGNET_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set CDGNET_RUN_SLOW=1 to run convergence tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return Config(
        channels=8,
        small_channels=4,
        reduction_ratio=4,
        batch=2,
        crop=8,
        epochs=2,
        checkpoint_every=1,
        seed=3,
    )


@pytest.fixture
def tiny_pairs():
    pairs = []
    for index in range(4):
        sharp, blurry, _ = synth_pair(16, np.random.default_rng([7, index]))
        pairs.append(make_pair(f"{index:04d}.png", blurry, sharp, mu=0.96))
    return pairs


@pytest.fixture
def dataset_dir(tmp_path):
    root = tmp_path / "data"
    for index in range(3):
        sharp, blurry, _ = synth_pair(16, np.random.default_rng([11, index]))
        save_image(sharp, root / "sharp" / f"{index:04d}.png")
        save_image(blurry, root / "blur" / f"{index:04d}.png")
    return root
