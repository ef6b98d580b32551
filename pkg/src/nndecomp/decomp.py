"""Class-wise components over a frozen network and learned binary masks.

A component k scores an input as (class-k logit, best other logit) under
the component's mask; the aggregate predictor takes the argmax of the
positive scores.  Masks are trained by gradient descent on per-unit
logits: the forward pass gates units hard (binarized), while gradients
follow the relaxed sigmoid surrogate, so the returned gradient is exactly
the gradient of the surrogate loss and can be checked against finite
differences.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import SurgeryError, TrainingError, ValidationError
from .network import (
    DenseNetwork,
    Layer,
    check_masks,
    masked_forward,
    masked_forward_batch,
)

MASK_SCHEMA = "nndecomp-mask/1"

# sigmoid(20) is 1 - 2e-9: binarizes to 1 at any threshold below that.
FULL_MASK_LOGIT = 20.0


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class MaskState:
    """Per-hidden-unit gate logits; relaxed gate = sigmoid(logits/temperature)."""

    logits: tuple  # one float64 vector per hidden layer
    temperature: float = 1.0
    binarize_threshold: float = 0.5

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValidationError("temperature must be positive")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValidationError("binarize_threshold must lie in (0, 1)")
        # copies, so freezing never reaches back into caller-owned arrays
        vecs = tuple(np.array(v, dtype=np.float64, order="C") for v in self.logits)
        for v in vecs:
            v.setflags(write=False)
        object.__setattr__(self, "logits", vecs)

    def relaxed(self):
        return [sigmoid(v / self.temperature) for v in self.logits]


def binarize(mask):
    """Hard 0/1 gates.  At the default threshold 0.5 this is exactly
    `logit >= 0`, avoiding any sigmoid rounding at the cut."""
    if mask.binarize_threshold == 0.5:
        return [(v >= 0.0).astype(np.float64) for v in mask.logits]
    return [
        (sigmoid(v / mask.temperature) >= mask.binarize_threshold).astype(np.float64)
        for v in mask.logits
    ]


@dataclass(frozen=True)
class Component:
    """A class-k binary predictor: the shared frozen net plus its mask."""

    net: DenseNetwork
    class_index: int
    mask: MaskState

    def __post_init__(self):
        hidden = self.net.hidden_sizes
        if len(self.mask.logits) != len(hidden):
            raise ValidationError(
                f"mask has {len(self.mask.logits)} layers, net has {len(hidden)}"
            )
        for i, v in enumerate(self.mask.logits):
            if v.shape != (hidden[i],):
                raise ValidationError(
                    f"mask layer {i} has {v.shape[0]} units, expected {hidden[i]}"
                )
        if not 0 <= self.class_index < self.net.class_count:
            raise ValidationError(f"class index {self.class_index} out of range")
        if not support(self):
            raise ValidationError(
                f"component {self.class_index} retains no units after binarization"
            )

    def binary_masks(self):
        return binarize(self.mask)


def support(component):
    """Retained (layer, unit) ids of the binarized mask."""
    ids = set()
    for layer, vec in enumerate(binarize(component.mask)):
        for unit in np.nonzero(vec == 1.0)[0]:
            ids.add((layer, int(unit)))
    return frozenset(ids)


def full_mask(net):
    return MaskState(tuple(np.full(h, FULL_MASK_LOGIT) for h in net.hidden_sizes))


def make_components(net, class_count=None):
    """One all-units component per class; aggregation then reproduces the
    original argmax exactly."""
    c = net.class_count if class_count is None else class_count
    if c != net.class_count:
        raise ValidationError(
            f"requested {c} components for a {net.class_count}-class network"
        )
    return [Component(net, k, full_mask(net)) for k in range(c)]


def component_score(component, x):
    """(class-k logit, max other logit) under the component's mask."""
    logits = masked_forward(component.net, component.binary_masks(), x)
    k = component.class_index
    pos = float(logits[k])
    others = np.delete(logits, k)
    return pos, float(others.max())


def _check_family(components):
    if not components:
        raise ValidationError("no components given")
    net = components[0].net
    c = net.class_count
    if len(components) != c:
        raise ValidationError(f"need exactly {c} components, got {len(components)}")
    seen = sorted(comp.class_index for comp in components)
    if seen != list(range(c)):
        raise ValidationError(f"component class indices {seen} are not 0..{c - 1}")
    for comp in components:
        if comp.net is not net:
            raise ValidationError("components must share one underlying network")
    return net


def aggregate_predict(components, x):
    """argmax over per-class positive scores; ties break to the lowest class."""
    _check_family(components)
    by_class = sorted(components, key=lambda c: c.class_index)
    pos = [component_score(comp, x)[0] for comp in by_class]
    return int(np.argmax(pos))


def aggregate_predict_batch(components, X):
    net = _check_family(components)
    by_class = sorted(components, key=lambda c: c.class_index)
    pos = np.empty((len(X), net.class_count))
    for comp in by_class:
        logits = masked_forward_batch(net, comp.binary_masks(), X)
        pos[:, comp.class_index] = logits[:, comp.class_index]
    return np.argmax(pos, axis=1)


def init_mask_logits(net, alpha, scale=1.0):
    """Interpolate between uniform (alpha=0: all logits zero, relaxed gates
    at 0.5) and magnitude-anchored initialization (alpha=1: logits follow
    the within-layer standardized l2 norms of incoming weight rows)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    logits = []
    for layer in net.layers[:-1]:
        norms = np.linalg.norm(layer.weights, axis=1)
        std = norms.std()
        z = np.zeros_like(norms) if std == 0.0 else (norms - norms.mean()) / std
        logits.append(alpha * scale * z)
    return MaskState(tuple(logits))


@dataclass(frozen=True)
class LbmaskConfig:
    target_sparsity: float = 0.5
    init_alpha: float = 0.0
    init_scale: float = 1.0
    learning_rate: float = 1.0
    steps: int = 400
    batch_size: int = 64
    sparsity_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.target_sparsity < 1.0:
            raise ValidationError("target_sparsity must lie in [0, 1)")
        if not 0.0 <= self.init_alpha <= 1.0:
            raise ValidationError("init_alpha must lie in [0, 1]")
        if self.learning_rate <= 0 or self.steps < 0 or self.batch_size < 1:
            raise ValidationError("bad optimizer settings")
        if self.sparsity_weight < 0:
            raise ValidationError("sparsity_weight must be >= 0")


@dataclass(frozen=True)
class MaskLoss:
    loss: float  # hard-gated loss actually reported
    surrogate_loss: float  # relaxed-gate loss the gradient differentiates
    gradient: tuple  # dL_surrogate/dlogits, one vector per hidden layer


def _pair_scores(logits2d, k):
    pos = logits2d[:, k]
    others = logits2d.copy()
    others[:, k] = -np.inf
    neg_idx = np.argmax(others, axis=1)
    neg = others[np.arange(len(logits2d)), neg_idx]
    return pos, neg, neg_idx


def _pair_bce(pos, neg, targets):
    # Two-way cross-entropy over the (pos, neg) logit pair: target index 0
    # when the sample belongs to the positive class.
    sign = np.where(targets == 1, 1.0, -1.0)
    return np.logaddexp(0.0, sign * (neg - pos))


def _sparsity_penalty(mask, cfg):
    probs = np.concatenate(mask.relaxed())
    gap = probs.mean() - (1.0 - cfg.target_sparsity)
    return cfg.sparsity_weight * gap * gap, gap


def lbmask_loss(component, features, labels, mask, cfg):
    """Loss under hard gates plus the relaxed-surrogate gradient.

    `labels` are reference-model class predictions; the binary target is
    membership in the component's class.
    """
    if len(features) == 0:
        raise ValidationError("empty batch")
    net = component.net
    k = component.class_index
    targets = (np.asarray(labels) == k).astype(np.float64)

    # Reported loss: binarized forward.
    hard = masked_forward_batch(net, binarize(mask), features)
    pos, neg, _ = _pair_scores(hard, k)
    penalty, gap = _sparsity_penalty(mask, cfg)
    hard_loss = float(np.mean(_pair_bce(pos, neg, targets))) + penalty

    # Gradient: exact derivative of the same loss with sigmoid gates.
    temp = mask.temperature
    gates = mask.relaxed()
    weights, biases = net._weights, net._biases
    last = len(weights) - 1
    a = features
    pres, posts, acts = [], [], [a]
    for i in range(last):
        pre = a @ weights[i].T + biases[i]
        post = np.maximum(pre, 0.0)
        a = post * gates[i]
        pres.append(pre)
        posts.append(post)
        acts.append(a)
    soft_logits = a @ weights[last].T + biases[last]
    s_pos, s_neg, s_neg_idx = _pair_scores(soft_logits, k)
    surrogate_loss = float(np.mean(_pair_bce(s_pos, s_neg, targets))) + penalty

    n = len(features)
    sign = np.where(targets == 1, 1.0, -1.0)
    ddiff = sign * sigmoid(sign * (s_neg - s_pos)) / n  # d mean-BCE / d(neg-pos)
    dlogits = np.zeros_like(soft_logits)
    dlogits[:, k] = -ddiff
    dlogits[np.arange(n), s_neg_idx] += ddiff

    n_units = sum(g.shape[0] for g in gates)
    grad = [None] * last
    da = dlogits @ weights[last]
    for i in range(last - 1, -1, -1):
        dgate = (da * posts[i]).sum(axis=0)
        dpre = da * gates[i] * (pres[i] > 0.0)
        if i > 0:
            da = dpre @ weights[i]
        dsig = gates[i] * (1.0 - gates[i]) / temp
        pen_term = cfg.sparsity_weight * 2.0 * gap / n_units
        grad[i] = (dgate + pen_term) * dsig
    return MaskLoss(hard_loss, surrogate_loss, tuple(grad))


def lbmask_train(component, calibration, cfg):
    """Gradient descent on the mask logits only; network weights stay frozen.

    Deterministic given cfg.seed and the component's class (the batch
    stream is derived from both, so components can train in parallel).
    """
    if len(calibration) == 0:
        raise ValidationError("calibration set is empty")
    rng = np.random.default_rng((cfg.seed, component.class_index))
    mask = component.mask
    logits = [v.copy() for v in mask.logits]
    n = len(calibration)
    for step in range(cfg.steps):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch_x = calibration.combined_features[idx]
        batch_y = calibration.combined_labels[idx]
        state = replace(mask, logits=tuple(logits))
        result = lbmask_loss(component, batch_x, batch_y, state, cfg)
        if not math.isfinite(result.loss):
            raise TrainingError("mask training diverged", step=step)
        for i, g in enumerate(result.gradient):
            logits[i] = logits[i] - cfg.learning_rate * g
    final = replace(mask, logits=tuple(logits))
    return Component(component.net, component.class_index, final)


def prune_counts(component):
    masks = binarize(component.mask)
    kept = sum(int(m.sum()) for m in masks)
    total = sum(m.shape[0] for m in masks)
    return kept, total


def dimension_surgery(net, masks):
    """Drop pruned hidden units and re-wire the following layer's columns.

    The reduced network computes exactly what the masked network does; a
    layer losing every unit is rejected (the equivalent network would need
    a constant path).
    """
    masks = check_masks(net, masks)
    keep = [np.nonzero(m == 1.0)[0] for m in masks]
    for layer_idx, kept in enumerate(keep):
        if len(kept) == 0:
            raise SurgeryError("mask removes every unit", layer=layer_idx)
    layers = []
    for i, layer in enumerate(net.layers):
        w, b = layer.weights, layer.bias
        if i < len(masks):
            w, b = w[keep[i], :], b[keep[i]]
        if i > 0:
            w = w[:, keep[i - 1]]
        layers.append(Layer(w, b, layer.activation))
    return DenseNetwork(tuple(layers), net.input_dim, net.class_count)


# ---------------------------------------------------------------------------
# Mask files carry only the raw state; binarized masks and supports are
# always derived.


def mask_to_dict(component):
    return {
        "schema_version": MASK_SCHEMA,
        "class_index": component.class_index,
        "temperature": component.mask.temperature,
        "threshold": component.mask.binarize_threshold,
        "logits": [v.tolist() for v in component.mask.logits],
    }


def save_mask(component, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mask_to_dict(component), fh, indent=1)
        fh.write("\n")


def load_mask(net, path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        state = MaskState(
            tuple(np.array(v, dtype=np.float64) for v in doc["logits"]),
            temperature=float(doc["temperature"]),
            binarize_threshold=float(doc["threshold"]),
        )
        return Component(net, int(doc["class_index"]), state)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed mask document: {exc}") from exc
