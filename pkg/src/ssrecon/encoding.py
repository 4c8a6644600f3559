"""Multi-coil Cartesian SENSE encoding operator.

``SenseOperator.forward`` maps an image ``(rows, cols)`` to masked per-coil
k-space ``(ncoils, rows, cols)``; unsampled entries are stored as explicit
zeros. ``adjoint`` is its exact Hermitian transpose and ``normal`` the fused
composition ``adjoint(forward(x))``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .core import FORWARD, INVERSE, check_grid, fft2c
from .errors import NormalizationError, ShapeError

SOS_TOL = 1e-8


def check_sos(maps, tol=SOS_TOL):
    """Validate that coil maps are sum-of-squares normalized where nonzero."""
    sos = np.sum(np.abs(maps) ** 2, axis=0)
    support = np.any(maps != 0, axis=0)
    if not np.all(np.isfinite(maps)):
        raise NormalizationError("coil maps contain non-finite values")
    dev = np.abs(sos[support] - 1.0)
    if dev.size and dev.max() > tol:
        raise NormalizationError(f"coil maps are not SOS-normalized (max deviation {dev.max():.3g})")


@dataclass(frozen=True, eq=False)
class CoilSensitivities:
    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 3 or maps.shape[0] < 1:
            raise ShapeError(f"coil maps must have shape (ncoils, rows, cols), got {maps.shape}")
        check_grid(maps.shape)
        check_sos(maps)
        maps.flags.writeable = False
        object.__setattr__(self, "maps", maps)

    @property
    def ncoils(self):
        return self.maps.shape[0]

    @property
    def shape(self):
        return self.maps.shape[1:]


def _as_grid(mask):
    picked = getattr(mask, "picked", mask)
    return np.asarray(picked, dtype=bool)


class SenseOperator:
    """Encoding ``E = M F S`` for coil maps ``S``, centered FFT ``F`` and mask ``M``.

    ``mask`` may be a boolean grid or any object with a ``picked`` grid
    (e.g. :class:`~ssrecon.sampling.SamplingMask`).
    """

    def __init__(self, sens, mask):
        if not isinstance(sens, CoilSensitivities):
            sens = CoilSensitivities(sens)
        grid = _as_grid(mask)
        if grid.shape != sens.shape:
            raise ShapeError(f"mask shape {grid.shape} does not match coil maps {sens.shape}")
        grid = grid.copy()
        grid.flags.writeable = False
        self.sens = sens
        self.mask = grid
        # in the normal operator the centering shifts cancel except on the mask
        self._maps_conj = np.conj(sens.maps)
        self._shifted_mask = np.fft.ifftshift(grid)

    @property
    def ncoils(self):
        return self.sens.ncoils

    @property
    def shape(self):
        return self.sens.shape

    def with_mask(self, mask):
        """Same coils, different sampling set."""
        return SenseOperator(self.sens, mask)

    def _check_image(self, x):
        x = np.asarray(x)
        if x.shape != self.shape:
            raise ShapeError(f"image shape {x.shape} does not match operator {self.shape}")
        return x

    def _check_kspace(self, y):
        y = np.asarray(y)
        if y.shape != (self.ncoils, *self.shape):
            raise ShapeError(f"k-space shape {y.shape} does not match operator {(self.ncoils, *self.shape)}")
        return y

    def forward(self, x):
        x = self._check_image(x)
        return self.mask * fft2c(self.sens.maps * x, FORWARD)

    def adjoint(self, y):
        y = self._check_kspace(y)
        coil_images = fft2c(self.mask * y, INVERSE)
        return np.sum(np.conj(self.sens.maps) * coil_images, axis=0)

    def normal(self, x):
        x = self._check_image(x)
        k = scipy.fft.fft2(self.sens.maps * x, norm="ortho", overwrite_x=True)
        k *= self._shifted_mask
        coil_images = scipy.fft.ifft2(k, norm="ortho", overwrite_x=True)
        coil_images *= self._maps_conj
        return coil_images.sum(axis=0)

    def restrict(self, y):
        """Entries of ``y`` at sampled locations, concatenated over coils."""
        return self._check_kspace(y)[:, self.mask]

    def scatter(self, values):
        """Inverse of :meth:`restrict`: place a sample vector back on zero grids."""
        values = np.asarray(values)
        out = np.zeros((self.ncoils, *self.shape), dtype=np.complex128)
        out[:, self.mask] = values.reshape(self.ncoils, -1)
        return out


def sense_forward(op, x):
    return op.forward(x)


def sense_adjoint(op, y):
    return op.adjoint(y)


def sense_normal(op, x):
    return op.normal(x)
