import numpy as np
import pytest

from nndecomp.network import make_network


def random_net(arch, seed, weight_scale=None):
    """Seeded random network for a size chain like (2, 8, 8, 4)."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        scale = weight_scale if weight_scale is not None else np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        biases.append(rng.normal(0.0, 0.1, size=fan_out))
    return make_network(arch, weights, biases)


def random_masks(net, rng, keep_prob=0.5):
    """Random 0/1 masks keeping at least one unit per hidden layer."""
    masks = []
    for h in net.hidden_sizes:
        m = (rng.random(h) < keep_prob).astype(np.float64)
        if m.sum() == 0:
            m[int(rng.integers(0, h))] = 1.0
        masks.append(m)
    return masks


def identity_net(dim=2):
    """Logits equal the input; handy for analytic boundary geometry."""
    return make_network((dim, dim), [np.eye(dim)], [np.zeros(dim)])


def passthrough_net(dim=2):
    """One relu hidden layer wired as identity, then an identity head.

    On the non-negative orthant this computes logits == x while still
    having hidden units that masks can act on.
    """
    return make_network(
        (dim, dim, dim), [np.eye(dim), np.eye(dim)], [np.zeros(dim), np.zeros(dim)]
    )


@pytest.fixture(scope="session")
def rng_factory():
    return lambda seed: np.random.default_rng(seed)
