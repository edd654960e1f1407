import numpy as np
import pytest
from hypothesis import settings

from hybridbf.array_channel import SystemConfig, generate_channels

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg_small():
    return SystemConfig(n_bs=16, n_rf=4, total_power=4.0, noise_var=0.4)


@pytest.fixture
def channels_small(cfg_small):
    return generate_channels(3, cfg_small)


def random_constant_modulus(rng, n):
    return np.exp(2j * np.pi * rng.random(n)) / np.sqrt(n)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
