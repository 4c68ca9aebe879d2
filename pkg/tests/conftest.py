import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A 12-video phantom set on small frames, shared by the I/O and pipeline tests."""
    from echopipe.datagen import build_dataset

    root = tmp_path_factory.mktemp("phantoms")
    return build_dataset(root, n_videos=12, seed=5, frame_range=(160, 200), frames=25)
