"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the
numpy reference takes over.  Set NNDECOMP_BACKEND=numpy to force the
fallback (useful for benchmarking and for debugging the extension), or
NNDECOMP_BACKEND=cython to fail loudly when the extension is missing.
"""

import os

from . import _reference

_requested = os.environ.get("NNDECOMP_BACKEND", "auto").strip().lower()

if _requested in ("auto", ""):
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _reference
elif _requested in ("cython", "fast", "compiled"):
    from . import _speedups as _impl
elif _requested in ("numpy", "python", "reference"):
    _impl = _reference
else:
    raise ValueError(f"unknown NNDECOMP_BACKEND value: {_requested!r}")

BACKEND = _impl.BACKEND

masked_logits = _impl.masked_logits
forward_logits = _impl.forward_logits
forward_trace = _impl.forward_trace
input_gradient = _impl.input_gradient
batch_masked_logits = _impl.batch_masked_logits
batch_logits = _impl.batch_logits
batch_input_gradient = _impl.batch_input_gradient


def available_backends():
    """Names of the importable backends (the reference one always is)."""
    names = ["numpy"]
    try:
        from . import _speedups  # noqa: F401
    except ImportError:
        pass
    else:
        names.append("cython")
    return names
