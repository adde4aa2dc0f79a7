"""
Shared fixtures: tiny blob tasks and architectures that train in milliseconds
"""

import pytest

from synprune.data import DatasetRole, make_blobs, sample_per_class
from synprune.models.architecture import linear, mlp
from synprune.models.state import init_state
from synprune.training import TrainRecipe


@pytest.fixture
def blobs():
    """2 well-separated classes of 4-dim points, 20 per class"""
    return make_blobs(class_count=2, per_class=20, dim=4, spread=0.3, seed=7)


@pytest.fixture
def blobs_test():
    return make_blobs(class_count=2, per_class=10, dim=4, spread=0.3, seed=7, draw=1, role=DatasetRole.TEST)


@pytest.fixture
def tiny_mlp():
    return mlp(4, 2, hidden=(8,))


@pytest.fixture
def tiny_linear():
    return linear(4, 2)


@pytest.fixture
def init(tiny_mlp):
    return init_state(tiny_mlp, seed=0)


@pytest.fixture
def recipe():
    return TrainRecipe(lr=0.1, momentum=0.9, epochs=3, batch_size=8, early_stop_patience=0)


@pytest.fixture
def synthetic(blobs):
    """Random-real stand-in for a distilled set (role synthetic, 2 per class)"""
    return sample_per_class(blobs, ipc=2, seed=0)
