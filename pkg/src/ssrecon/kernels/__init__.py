"""Convolution kernels used by the regularizer network.

The compiled extension (``_conv``) is preferred; the numpy implementation in
``_fallback`` is used when the extension is not built or when the environment
variable ``SSRECON_BACKEND=python`` is set. Both expose the same functions and
agree to rounding error.
"""

import os

from . import _fallback

if os.environ.get("SSRECON_BACKEND", "").lower() == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _conv as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

MAX_KERNEL = 7


def _check(x, w):
    if x.ndim != 3 or w.ndim != 4 or w.shape[1] != x.shape[0]:
        raise ValueError(f"incompatible conv shapes {x.shape} and {w.shape}")
    k = w.shape[2]
    if k != w.shape[3] or k % 2 == 0 or k > MAX_KERNEL:
        raise ValueError(f"kernel must be square, odd and <= {MAX_KERNEL}, got {w.shape[2:]}")


def conv2d(x, w, impl=None):
    """Cross-correlate ``x`` (cin, h, w) with ``w`` (cout, cin, k, k), zero padding, same size."""
    _check(x, w)
    return (impl or _impl).conv2d(x, w)


def conv2d_input_grad(gy, w, impl=None):
    """Adjoint of :func:`conv2d` in its input: maps (cout, h, w) back to (cin, h, w)."""
    wt = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return conv2d(gy, wt, impl=impl)


def conv2d_weight_grad(x, gy, k, impl=None):
    """Gradient of ``sum(gy * conv2d(x, w))`` with respect to ``w``; shape (cout, cin, k, k)."""
    if gy.shape[1:] != x.shape[1:]:
        raise ValueError(f"incompatible conv shapes {x.shape} and {gy.shape}")
    return (impl or _impl).conv2d_weight_grad(x, gy, k)
