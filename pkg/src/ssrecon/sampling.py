"""Acquisition masks and the partition of acquired k-space into DC and loss sets.

The phase-encode direction is the column axis: a line mask picks whole
columns. Randomness comes from a splitmix64 stream so that splits are
reproducible bit-for-bit from a 64-bit seed on any platform.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSplitError, ParameterError, ShapeError

UNIFORM = "uniform_random"
GAUSSIAN = "gaussian_density"
SCHEMES = (UNIFORM, GAUSSIAN)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z):
    # vectorized splitmix64 finalizer; uint64 arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def splitmix64(seed, n):
    """First ``n`` outputs of the splitmix64 generator started at ``seed``."""
    seed = int(seed) & MASK64
    steps = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        states = np.uint64(seed) + steps * np.uint64(GOLDEN_GAMMA)
        return _mix64(states)


def derive_seed(*parts):
    """Combine integers into one 64-bit seed by chained splitmix64 mixing."""
    acc = 0
    for part in parts:
        acc = int(splitmix64(acc ^ (int(part) & MASK64), 1)[0])
    return acc


def uniform_open(seed, n):
    """``n`` doubles in the open interval (0, 1) from the splitmix64 stream."""
    bits = splitmix64(seed, n) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


@dataclass(frozen=True, eq=False)
class SamplingMask:
    picked: np.ndarray
    accel: int = 1
    acs_cols: tuple | None = None

    @property
    def shape(self):
        return self.picked.shape

    @property
    def count(self):
        return int(self.picked.sum())

    def acs_grid(self):
        grid = np.zeros(self.shape, dtype=bool)
        if self.acs_cols is not None:
            lo, hi = self.acs_cols
            grid[:, lo : hi + 1] = True
        return grid


def make_omega_mask(rows, cols, accel, acs_lines):
    """Every ``accel``-th column from column 0 plus ``acs_lines`` centered columns."""
    if accel < 1:
        raise ParameterError(f"accel must be >= 1, got {accel}")
    if acs_lines < 0 or acs_lines > cols:
        raise ParameterError(f"acs_lines must be in [0, {cols}], got {acs_lines}")
    if rows < 1 or cols < 1:
        raise ParameterError(f"mask dimensions must be positive, got {rows}x{cols}")
    lines = np.zeros(cols, dtype=bool)
    lines[::accel] = True
    acs = None
    if acs_lines:
        lo = cols // 2 - acs_lines // 2
        acs = (lo, lo + acs_lines - 1)
        lines[lo : lo + acs_lines] = True
    picked = np.repeat(lines[None, :], rows, axis=0)
    return SamplingMask(picked=picked, accel=int(accel), acs_cols=acs)


@dataclass(frozen=True, eq=False)
class SplitSpec:
    theta: np.ndarray
    lam: np.ndarray
    rho: float
    scheme: str
    seed: int

    def codes(self):
        """Grid with 0 = not acquired, 1 = Theta, 2 = Lambda."""
        out = np.zeros(self.theta.shape, dtype=np.uint8)
        out[self.theta] = 1
        out[self.lam] = 2
        return out

    @classmethod
    def from_codes(cls, codes, rho, scheme, seed):
        codes = np.asarray(codes)
        return cls(theta=codes == 1, lam=codes == 2, rho=rho, scheme=scheme, seed=seed)


def selection_weights(shape, scheme, sigma=None):
    rows, cols = shape
    if scheme == UNIFORM:
        return np.ones(shape)
    if scheme == GAUSSIAN:
        sigma = cols / 4 if sigma is None else sigma
        dr = np.arange(rows) - rows // 2
        dc = np.arange(cols) - cols // 2
        d2 = dr[:, None] ** 2 + dc[None, :] ** 2
        return np.exp(-d2 / (2.0 * sigma**2))
    raise ParameterError(f"scheme must be one of {SCHEMES}, got {scheme!r}")


def split_omega(mask, rho, scheme=GAUSSIAN, seed=0, sigma=None, exclude_acs=False):
    """Draw the loss set Lambda from the acquired set and return Theta = Omega \\ Lambda.

    ``|Lambda| = round(rho * |Omega|)`` with round-half-to-even. Points are
    drawn without replacement with probability proportional to the scheme's
    weights (Efraimidis-Spirakis keys ``log(u) / w``). ``sigma`` is the
    Gaussian width in pixels (default ``cols / 4``).
    """
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"rho must lie in the open interval (0, 1), got {rho}")
    picked = np.asarray(getattr(mask, "picked", mask), dtype=bool)
    weights = selection_weights(picked.shape, scheme, sigma)
    n_omega = int(picked.sum())
    n_lambda = round(rho * n_omega)
    eligible = picked.copy()
    if exclude_acs:
        if not isinstance(mask, SamplingMask):
            raise ShapeError("exclude_acs needs a SamplingMask with ACS metadata")
        eligible &= ~mask.acs_grid()
    idx = np.flatnonzero(eligible)
    if n_lambda == 0 or n_lambda >= n_omega or n_lambda > idx.size:
        raise DegenerateSplitError(
            f"rho={rho} gives |Lambda|={n_lambda} of |Omega|={n_omega} ({idx.size} eligible)"
        )
    u = uniform_open(seed, idx.size)
    keys = np.log(u) / weights.ravel()[idx]
    order = np.argsort(-keys, kind="stable")
    lam = np.zeros(picked.size, dtype=bool)
    lam[idx[order[:n_lambda]]] = True
    lam = lam.reshape(picked.shape)
    return SplitSpec(theta=picked & ~lam, lam=lam, rho=float(rho), scheme=scheme, seed=int(seed))
