"""Dense feed-forward classifiers: evaluation, gradients, masking, and IO.

Networks are immutable once constructed (weight arrays are marked
read-only), hidden layers use relu, and the final layer is an identity
head producing one logit per class.  Everything downstream treats these
as pure functions of (network, input).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NumericError, ValidationError

RELU = "relu"
IDENTITY = "identity"

MODEL_SCHEMA = "nndecomp-model/1"


def _frozen_f64(a, name):
    # Copy so freezing never mutates the caller's array in place.
    arr = np.array(a, dtype=np.float64, order="C")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Layer:
    """One affine transform plus activation; weights are (out_dim, in_dim)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen_f64(self.weights, "weights"))
        object.__setattr__(self, "bias", _frozen_f64(self.bias, "bias"))
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValidationError("weights must be 2-D and bias 1-D")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValidationError(
                f"bias length {self.bias.shape[0]} does not match "
                f"{self.weights.shape[0]} output units"
            )
        if self.activation not in (RELU, IDENTITY):
            raise ValidationError(f"unsupported activation: {self.activation!r}")

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @property
    def in_dim(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class DenseNetwork:
    """A relu chain with an identity head of `class_count` logits."""

    layers: tuple
    input_dim: int
    class_count: int
    _weights: list = field(init=False, repr=False, compare=False)
    _biases: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValidationError("network needs at least one layer")
        if self.class_count < 2:
            raise ValidationError("class_count must be at least 2")
        if layers[0].in_dim != self.input_dim:
            raise ValidationError(
                f"first layer expects {layers[0].in_dim} inputs, "
                f"declared input_dim is {self.input_dim}"
            )
        for i in range(len(layers) - 1):
            if layers[i].out_dim != layers[i + 1].in_dim:
                raise ValidationError(
                    f"layer {i} emits {layers[i].out_dim} values but layer "
                    f"{i + 1} expects {layers[i + 1].in_dim}"
                )
            if layers[i].activation != RELU:
                raise ValidationError(f"hidden layer {i} must use relu")
        head = layers[-1]
        if head.activation != IDENTITY:
            raise ValidationError("final layer must use the identity activation")
        if head.out_dim != self.class_count:
            raise ValidationError(
                f"final layer emits {head.out_dim} logits, expected {self.class_count}"
            )
        object.__setattr__(self, "_weights", [l.weights for l in layers])
        object.__setattr__(self, "_biases", [l.bias for l in layers])

    @property
    def hidden_sizes(self):
        return tuple(l.out_dim for l in self.layers[:-1])

    @property
    def total_hidden_units(self):
        return sum(self.hidden_sizes)

    def arch(self):
        """Layer-size chain, e.g. (20, 32, 16, 4)."""
        return (self.input_dim,) + tuple(l.out_dim for l in self.layers)


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer pre/post activations; logits are the last post-activation."""

    pre_activations: tuple
    post_activations: tuple
    logits: np.ndarray


def make_network(sizes, weights, biases):
    """Assemble a network from a size chain and raw parameter arrays."""
    layers = []
    for i in range(len(sizes) - 1):
        act = IDENTITY if i == len(sizes) - 2 else RELU
        layers.append(Layer(weights[i], biases[i], act))
    return DenseNetwork(tuple(layers), input_dim=sizes[0], class_count=sizes[-1])


def _check_input(net, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise ValidationError(
            f"input has shape {x.shape}, expected ({net.input_dim},)"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationError("input contains non-finite entries")
    return x


def _check_batch(net, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValidationError(
            f"batch has shape {X.shape}, expected (n, {net.input_dim})"
        )
    return X


def forward(net, x):
    """Full forward pass with cached activations."""
    x = _check_input(net, x)
    pres, posts = _kernels.forward_trace(net._weights, net._biases, x)
    for i, pre in enumerate(pres):
        if not np.all(np.isfinite(pre)):
            raise NumericError(f"non-finite activation at layer {i}")
    logits = np.asarray(posts[-1])
    return ForwardTrace(tuple(map(np.asarray, pres)), tuple(map(np.asarray, posts)), logits)


def forward_logits(net, x):
    x = _check_input(net, x)
    return _kernels.forward_logits(net._weights, net._biases, x)


def predict(net, x):
    """Predicted label; ties break toward the lowest index."""
    return int(np.argmax(forward_logits(net, x)))


def margin(net, x):
    """Top logit minus second logit; zero exactly on argmax ties."""
    return _margin_of(forward_logits(net, x))


def _margin_of(logits):
    top2 = np.partition(logits, -2)[-2:]
    return float(top2[1] - top2[0])


def input_gradient(net, x, target_label):
    """Gradient of softmax cross-entropy at `target_label` w.r.t. x."""
    x = _check_input(net, x)
    if not 0 <= target_label < net.class_count:
        raise ValidationError(f"label {target_label} outside [0, {net.class_count})")
    return np.asarray(
        _kernels.input_gradient(net._weights, net._biases, x, int(target_label))
    )


def check_masks(net, masks):
    """Normalize per-hidden-layer masks to float64 0/1 arrays."""
    hidden = net.hidden_sizes
    if len(masks) != len(hidden):
        raise ValidationError(
            f"got {len(masks)} mask vectors for {len(hidden)} hidden layers"
        )
    out = []
    for i, m in enumerate(masks):
        m = np.ascontiguousarray(m, dtype=np.float64)
        if m.shape != (hidden[i],):
            raise ValidationError(
                f"mask {i} has shape {m.shape}, expected ({hidden[i]},)"
            )
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValidationError(f"mask {i} must be 0/1 valued")
        out.append(m)
    return out


def masked_forward(net, masks, x):
    """Logits with each hidden post-activation gated elementwise by its mask."""
    x = _check_input(net, x)
    masks = check_masks(net, masks)
    return np.asarray(_kernels.masked_logits(net._weights, net._biases, masks, x))


def forward_logits_batch(net, X):
    X = _check_batch(net, X)
    return np.asarray(_kernels.batch_logits(net._weights, net._biases, X))


def predict_batch(net, X):
    return np.argmax(forward_logits_batch(net, X), axis=1)


def margin_batch(net, X):
    logits = forward_logits_batch(net, X)
    top2 = np.partition(logits, -2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def masked_forward_batch(net, masks, X):
    X = _check_batch(net, X)
    masks = check_masks(net, masks)
    return np.asarray(_kernels.batch_masked_logits(net._weights, net._biases, masks, X))


def input_gradient_batch(net, X, targets):
    X = _check_batch(net, X)
    targets = np.asarray(targets, dtype=np.int64)
    return np.asarray(
        _kernels.batch_input_gradient(net._weights, net._biases, X, targets)
    )


# ---------------------------------------------------------------------------
# Model file format: JSON with row-major weight matrices.  json round-trips
# finite doubles exactly (repr is shortest-roundtrip), so save->load is
# bit-exact.


def network_to_dict(net):
    return {
        "schema_version": MODEL_SCHEMA,
        "input_dim": net.input_dim,
        "class_count": net.class_count,
        "layers": [
            {
                "activation": l.activation,
                "bias": l.bias.tolist(),
                "weights": l.weights.tolist(),
            }
            for l in net.layers
        ],
    }


def network_from_dict(doc):
    try:
        layers = tuple(
            Layer(np.array(l["weights"]), np.array(l["bias"]), l["activation"])
            for l in doc["layers"]
        )
        return DenseNetwork(layers, int(doc["input_dim"]), int(doc["class_count"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model document: {exc}") from exc


def save_model(net, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=1)
        fh.write("\n")


def _reject_constants(token):
    raise ValidationError(f"model file contains non-finite literal {token!r}")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh, parse_constant=_reject_constants)
    net = network_from_dict(doc)
    if doc.get("schema_version") not in (None, MODEL_SCHEMA):
        raise ValidationError(f"unknown model schema {doc['schema_version']!r}")
    return net


def softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def cross_entropy(logits, target):
    """Softmax cross-entropy of a single logit vector against one label."""
    z = logits - logits.max()
    return float(math.log(np.exp(z).sum()) - z[target])
