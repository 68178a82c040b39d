import numpy as np
import pytest

from decohd.model import ModelConfig, init_params, materialize_projectors
from decohd.ops import rng_from_seed


@pytest.fixture
def rng():
    return rng_from_seed(20240917)


def random_small_instance(rng, dtype=np.float64):
    """A random tiny model + batch for gradient and equivalence checks."""
    num_layers = int(rng.integers(1, 4))
    channels = tuple(int(rng.integers(1, 4)) for _ in range(num_layers))
    cfg = ModelConfig(
        channels_per_layer=channels,
        latent_dim=int(rng.integers(2, 17)),
        dim=int(rng.integers(4, 65)),
        num_classes=int(rng.integers(2, 5)),
        seed=int(rng.integers(0, 2**31)),
    )
    params = init_params(cfg, sigma=0.7, dtype=dtype)
    projectors = materialize_projectors(cfg, dtype=dtype)
    batch = int(rng.integers(1, 9))
    h = rng.standard_normal((batch, cfg.dim)).astype(dtype)
    y = rng.integers(0, cfg.num_classes, batch)
    return cfg, params, projectors, h, y


def integer_bank_and_head(rng, channels=(2, 3), dim=6, num_classes=3):
    """Integer-valued fixtures: exact under float arithmetic."""
    from decohd.model import ChannelBank

    bank = ChannelBank(
        [rng.integers(-3, 4, (l, dim)).astype(np.float64) for l in channels]
    )
    head = rng.integers(-3, 4, (num_classes, int(np.prod(channels)))).astype(np.float64)
    h = rng.integers(-3, 4, dim).astype(np.float64)
    return bank, head, h
