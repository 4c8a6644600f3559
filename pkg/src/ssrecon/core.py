"""Centered unitary FFTs, inner products and norms on complex arrays.

Images are ``complex128`` arrays of shape ``(rows, cols)``; multi-coil
quantities stack coils on a leading axis. All transforms act on the last two
axes.
"""

import numpy as np
import scipy.fft

from .errors import ShapeError

FORWARD = "forward"
INVERSE = "inverse"


def is_power_of_two(n):
    return n > 0 and n & (n - 1) == 0


def check_grid(shape):
    """Raise ShapeError unless the trailing two dims are powers of two."""
    if len(shape) < 2:
        raise ShapeError(f"expected at least 2 dimensions, got shape {shape}")
    rows, cols = shape[-2:]
    if not (is_power_of_two(rows) and is_power_of_two(cols)):
        raise ShapeError(f"grid dimensions must be powers of two, got {rows}x{cols}")


def fft2c(x, direction=FORWARD):
    """Centered orthonormal 2-D DFT over the last two axes.

    The zero frequency sits at index ``(rows // 2, cols // 2)``. ``direction``
    is ``"forward"`` or ``"inverse"``; the two are exact adjoints.
    """
    x = np.asarray(x)
    check_grid(x.shape)
    axes = (-2, -1)
    shifted = np.fft.ifftshift(x, axes=axes)
    if direction == FORWARD:
        out = scipy.fft.fft2(shifted, axes=axes, norm="ortho")
    elif direction == INVERSE:
        out = scipy.fft.ifft2(shifted, axes=axes, norm="ortho")
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return np.fft.fftshift(out, axes=axes)


def ifft2c(k):
    return fft2c(k, INVERSE)


def vdot(a, b):
    """Sum of ``conj(a_i) * b_i`` over all entries."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.size != b.size:
        raise ShapeError(f"vdot length mismatch: {a.size} vs {b.size}")
    return complex(np.vdot(a.ravel(), b.ravel()))


def norms(a):
    """Return ``(l1, l2)``: sum of moduli and Euclidean norm."""
    a = np.asarray(a)
    if a.size == 0:
        raise ShapeError("norms of an empty sequence")
    mag = np.abs(a.ravel())
    return float(mag.sum()), float(np.sqrt(np.dot(mag, mag)))
