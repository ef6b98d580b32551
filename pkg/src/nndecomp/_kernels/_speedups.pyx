# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot network kernels.

Mirrors `_reference.py`; see that module for the shared contract.  The
single-sample paths avoid numpy call overhead, which dominates when the
layers are small (boundary bisection, per-sample probing).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

BACKEND = "cython"


cdef void _affine(const double[:, ::1] w, const double[::1] b,
                  const double[::1] x, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(w.shape[0]):
        acc = b[i]
        for j in range(w.shape[1]):
            acc += w[i, j] * x[j]
        out[i] = acc


cdef void _relu_inplace(double[::1] v) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(v.shape[0]):
        if v[i] < 0.0:
            v[i] = 0.0


cdef void _mul_inplace(double[::1] v, const double[::1] m) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(v.shape[0]):
        v[i] = v[i] * m[i]


def masked_logits(list weights, list biases, masks, x):
    cdef Py_ssize_t last = len(weights) - 1
    cdef Py_ssize_t i
    cdef const double[::1] a = x
    cdef double[::1] out
    for i in range(last):
        hidden = np.empty(len(biases[i]))
        out = hidden
        _affine(weights[i], biases[i], a, out)
        _relu_inplace(out)
        if masks is not None:
            _mul_inplace(out, masks[i])
        a = out
    result = np.empty(len(biases[last]))
    out = result
    _affine(weights[last], biases[last], a, out)
    return result


def forward_logits(list weights, list biases, x):
    return masked_logits(weights, biases, None, x)


def forward_trace(list weights, list biases, x):
    cdef Py_ssize_t last = len(weights) - 1
    cdef Py_ssize_t i
    cdef const double[::1] a = x
    cdef double[::1] pre_view, post_view
    pres = []
    posts = []
    for i in range(len(weights)):
        pre = np.empty(len(biases[i]))
        pre_view = pre
        _affine(weights[i], biases[i], a, pre_view)
        pres.append(pre)
        if i < last:
            post = pre.copy()
            post_view = post
            _relu_inplace(post_view)
            posts.append(post)
            a = post_view
        else:
            posts.append(pre)
    return pres, posts


cdef void _softmax_delta(const double[::1] logits, Py_ssize_t target,
                         double[::1] delta) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = logits[0]
    cdef double s = 0.0
    for i in range(1, logits.shape[0]):
        if logits[i] > m:
            m = logits[i]
    for i in range(logits.shape[0]):
        delta[i] = exp(logits[i] - m)
        s += delta[i]
    for i in range(logits.shape[0]):
        delta[i] = delta[i] / s
    delta[target] -= 1.0


def input_gradient(list weights, list biases, x, Py_ssize_t target):
    pres, _ = forward_trace(weights, biases, x)
    cdef const double[::1] logits = pres[len(pres) - 1]
    cdef Py_ssize_t layer, i, j
    cdef const double[:, ::1] w
    cdef const double[::1] pre_prev
    cdef double[::1] delta, nxt

    buf = np.empty(len(logits))
    delta = buf
    _softmax_delta(logits, target, delta)

    # Walk dLoss/d(pre-activation) back to the input.
    for layer in range(len(weights) - 1, 0, -1):
        w = weights[layer]
        pre_prev = pres[layer - 1]
        nxt_buf = np.zeros(w.shape[1])
        nxt = nxt_buf
        with nogil:
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    nxt[j] += w[i, j] * delta[i]
            for j in range(w.shape[1]):
                if pre_prev[j] <= 0.0:
                    nxt[j] = 0.0
        delta = nxt
        buf = nxt_buf
    w = weights[0]
    grad = np.zeros(w.shape[1])
    cdef double[::1] gview = grad
    with nogil:
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                gview[j] += w[i, j] * delta[i]
    return grad


def batch_masked_logits(list weights, list biases, masks, X):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i
    out = np.empty((n, len(biases[len(biases) - 1])))
    for i in range(n):
        out[i] = masked_logits(weights, biases, masks, X[i])
    return out


def batch_logits(list weights, list biases, X):
    return batch_masked_logits(weights, biases, None, X)


def batch_input_gradient(list weights, list biases, X, targets):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i
    grads = np.empty((n, X.shape[1]))
    for i in range(n):
        grads[i] = input_gradient(weights, biases, X[i], targets[i])
    return grads
