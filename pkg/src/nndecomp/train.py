"""Reference-model training: plain seeded minibatch gradient descent.

This exists to produce frozen fixture classifiers; it is deliberately
unsophisticated (fixed learning rate, no momentum, no schedules) so that
runs are exactly reproducible from the seed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TrainingError, ValidationError
from .network import make_network

# Seed-stream tags so init and epoch shuffling never collide.
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 150
    batch_size: int = 32
    seed: int = 0
    # multiplies the He scale; small values push training into the
    # feature-learning regime, which yields more class-aligned hidden units
    init_scale: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.init_scale <= 0:
            raise ValidationError("learning_rate and init_scale must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")


def init_params(arch, seed, init_scale=1.0):
    """He-style seeded initialization for the given size chain."""
    rng = np.random.default_rng((seed, _INIT_STREAM))
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        scale = init_scale * np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward_cached(weights, biases, X):
    pres = []
    a = X
    last = len(weights) - 1
    for i in range(len(weights)):
        pre = a @ weights[i].T + biases[i]
        pres.append(pre)
        a = np.maximum(pre, 0.0) if i < last else pre
    return pres


def _batch_grads(weights, biases, X, y):
    """Mean softmax cross-entropy loss and parameter gradients."""
    pres = _forward_cached(weights, biases, X)
    logits = pres[-1]
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    p = expz / expz.sum(axis=1, keepdims=True)
    n = len(X)
    idx = np.arange(n)
    loss = float(np.mean(np.log(expz.sum(axis=1)) - z[idx, y]))

    delta = p
    delta[idx, y] -= 1.0
    delta /= n
    grads_w, grads_b = [None] * len(weights), [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        a_prev = X if i == 0 else np.maximum(pres[i - 1], 0.0)
        grads_w[i] = delta.T @ a_prev
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * (pres[i - 1] > 0.0)
    return loss, grads_w, grads_b


def train_reference(dataset, arch, cfg):
    """Train a classifier on `dataset` with the size chain `arch`.

    Deterministic given cfg.seed; raises TrainingError if the loss goes
    non-finite.
    """
    arch = tuple(int(s) for s in arch)
    if len(arch) < 2:
        raise ValidationError("arch needs at least input and output sizes")
    if arch[0] != dataset.dim:
        raise ValidationError(
            f"arch input size {arch[0]} does not match data dim {dataset.dim}"
        )
    if arch[-1] != dataset.class_count:
        raise ValidationError(
            f"arch output size {arch[-1]} does not match {dataset.class_count} classes"
        )

    weights, biases = init_params(arch, cfg.seed, cfg.init_scale)
    X, y = dataset.features, dataset.labels
    n = len(X)
    for epoch in range(cfg.epochs):
        order = np.random.default_rng((cfg.seed, _SHUFFLE_STREAM, epoch)).permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, gw, gb = _batch_grads(weights, biases, X[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingError("reference training diverged", step=epoch)
            for i in range(len(weights)):
                weights[i] -= cfg.learning_rate * gw[i]
                biases[i] -= cfg.learning_rate * gb[i]
    return make_network(arch, weights, biases)


def training_accuracy(net, dataset):
    from .network import predict_batch

    return float(np.mean(predict_batch(net, dataset.features) == dataset.labels))
