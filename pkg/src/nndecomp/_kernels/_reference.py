"""Pure-numpy reference implementation of the hot network kernels.

Both backends share one contract: `weights` is a list of C-contiguous
float64 matrices (out_dim x in_dim), `biases` the matching vectors,
hidden layers use relu and the final layer is identity.  `masks` is a
list of float64 0/1 vectors, one per hidden layer, or None for the
unmasked network.  The compiled backend in `_speedups.pyx` mirrors every
function here; results may differ from this module in the last few ulps
(different summation order), never beyond.
"""

import numpy as np

BACKEND = "numpy"


def masked_logits(weights, biases, masks, x):
    a = x
    last = len(weights) - 1
    for i in range(last):
        a = np.maximum(weights[i] @ a + biases[i], 0.0)
        if masks is not None:
            a = a * masks[i]
    return weights[last] @ a + biases[last]


def forward_logits(weights, biases, x):
    return masked_logits(weights, biases, None, x)


def forward_trace(weights, biases, x):
    """Per-layer pre/post activations of the unmasked network."""
    pres = []
    posts = []
    a = x
    last = len(weights) - 1
    for i in range(len(weights)):
        pre = weights[i] @ a + biases[i]
        post = np.maximum(pre, 0.0) if i < last else pre
        pres.append(pre)
        posts.append(post)
        a = post
    return pres, posts


def input_gradient(weights, biases, x, target):
    """Gradient of softmax cross-entropy at `target` w.r.t. the input."""
    pres, _ = forward_trace(weights, biases, x)
    logits = pres[-1]
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    delta = p
    delta[target] -= 1.0
    for i in range(len(weights) - 1, 0, -1):
        delta = (weights[i].T @ delta) * (pres[i - 1] > 0.0)
    return weights[0].T @ delta


def batch_masked_logits(weights, biases, masks, X):
    a = X
    last = len(weights) - 1
    for i in range(last):
        a = np.maximum(a @ weights[i].T + biases[i], 0.0)
        if masks is not None:
            a = a * masks[i]
    return a @ weights[last].T + biases[last]


def batch_logits(weights, biases, X):
    return batch_masked_logits(weights, biases, None, X)


def batch_input_gradient(weights, biases, X, targets):
    pres = []
    a = X
    last = len(weights) - 1
    for i in range(len(weights)):
        pre = a @ weights[i].T + biases[i]
        pres.append(pre)
        a = np.maximum(pre, 0.0) if i < last else pre
    logits = pres[-1]
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    delta = p
    delta[np.arange(len(X)), targets] -= 1.0
    for i in range(len(weights) - 1, 0, -1):
        delta = (delta @ weights[i]) * (pres[i - 1] > 0.0)
    return delta @ weights[0]
