"""Shared fixtures: the canonical separable synthetic set and random nets."""

import numpy as np
import pytest

from prunemip.data import gen_synthetic
from prunemip.nn import Mlp, TrainConfig, init_mlp, sgd_train


@pytest.fixture(scope="session")
def separable_data():
    """The canonical separable synthetic set used throughout the suite."""
    return gen_synthetic(6, 3, 600, 6.0, seed=0)


@pytest.fixture(scope="session")
def trained_1x16(separable_data):
    net = init_mlp(6, [16], 3, seed=1)
    cfg = TrainConfig(epochs=20, batch_size=32, learning_rate=0.1, seed=1)
    net, _ = sgd_train(net, separable_data, cfg)
    return net


def random_net(seed, input_dim=None, hidden=None, classes=None, scale=1.0):
    """Small random net with seeded Gaussian weights (not trained)."""
    rng = np.random.default_rng(seed)
    input_dim = input_dim or int(rng.integers(2, 5))
    hidden = hidden or [int(rng.integers(2, 6)) for _ in range(int(rng.integers(1, 3)))]
    classes = classes or int(rng.integers(2, 4))
    sizes = [input_dim] + list(hidden) + [classes]
    layers = []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        layers.append((scale * rng.normal(size=(fo, fi)) / np.sqrt(fi),
                       scale * rng.normal(size=fo) * 0.3))
    return Mlp(layers)
