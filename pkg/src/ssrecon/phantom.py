"""Synthetic multi-coil scans: ellipse phantoms, smooth coil maps, noisy acquisition."""

import numpy as np

from .core import check_grid
from .encoding import SenseOperator
from .errors import ParameterError


def _grid(rows, cols):
    # normalized coordinates in [-1, 1)
    r = (np.arange(rows) - rows // 2) / (rows / 2)
    c = (np.arange(cols) - cols // 2) / (cols / 2)
    return np.meshgrid(r, c, indexing="ij")


def _ellipse(rr, cc, center, axes, angle):
    cos, sin = np.cos(angle), np.sin(angle)
    dr, dc = rr - center[0], cc - center[1]
    u = (cos * dr + sin * dc) / axes[0]
    v = (-sin * dr + cos * dc) / axes[1]
    return (u * u + v * v) <= 1.0


def make_phantom(rows, cols, seed):
    """Random Shepp-Logan-style phantom with a smooth phase, max magnitude 1.

    A head-like outer ellipse and darker interior carry 5-9 random inner
    ellipses; the piecewise-constant magnitude is modulated by a gentle
    bilinear shading and multiplied by a low-order polynomial phase.
    """
    check_grid((rows, cols))
    rng = np.random.default_rng(seed)
    rr, cc = _grid(rows, cols)
    tilt = rng.uniform(-0.3, 0.3)
    outer = (rng.uniform(0.78, 0.9), rng.uniform(0.62, 0.76))
    img = 1.0 * _ellipse(rr, cc, (0.0, 0.0), outer, tilt)
    img -= 0.6 * _ellipse(rr, cc, (0.0, 0.0), (outer[0] - 0.07, outer[1] - 0.06), tilt)
    for _ in range(rng.integers(5, 10)):
        center = rng.uniform(-0.45, 0.45, size=2)
        axes = rng.uniform(0.06, 0.3, size=2)
        img += rng.uniform(-0.25, 0.45) * _ellipse(rr, cc, center, axes, rng.uniform(0, np.pi))
    img = np.clip(img, 0.0, None)
    shading = 1.0 + rng.uniform(-0.15, 0.15) * rr + rng.uniform(-0.15, 0.15) * cc
    coef = rng.uniform(-0.6, 0.6, size=5)
    phase = coef[0] + coef[1] * rr + coef[2] * cc + coef[3] * rr * cc + coef[4] * (rr**2 - cc**2)
    x = img * shading * np.exp(1j * phase)
    return x / np.abs(x).max()


def make_coilmaps(rows, cols, ncoils, seed):
    """Gaussian-lobe coil profiles around the field of view, SOS-normalized everywhere."""
    check_grid((rows, cols))
    if ncoils < 1:
        raise ParameterError(f"ncoils must be >= 1, got {ncoils}")
    rng = np.random.default_rng(seed)
    rr, cc = _grid(rows, cols)
    offset = rng.uniform(0, 2 * np.pi)
    maps = np.empty((ncoils, rows, cols), dtype=np.complex128)
    for c in range(ncoils):
        angle = offset + 2 * np.pi * c / ncoils
        cr, cc0 = 1.1 * np.sin(angle), 1.1 * np.cos(angle)
        width = rng.uniform(0.7, 0.9)
        mag = np.exp(-((rr - cr) ** 2 + (cc - cc0) ** 2) / (2 * width**2))
        phase = rng.uniform(-np.pi, np.pi) + rng.uniform(-0.8, 0.8) * rr + rng.uniform(-0.8, 0.8) * cc
        maps[c] = mag * np.exp(1j * phase)
    return maps / np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))


def simulate_acquisition(x, sens, mask, noise_sigma, seed):
    """``E x + n`` with i.i.d. complex Gaussian noise (std ``noise_sigma`` per real component) on the mask."""
    if noise_sigma < 0:
        raise ParameterError(f"noise_sigma must be >= 0, got {noise_sigma}")
    op = SenseOperator(sens, mask)
    y = op.forward(x)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((2, *y.shape))
        y = y + op.mask * (noise_sigma * (noise[0] + 1j * noise[1]))
    return y
