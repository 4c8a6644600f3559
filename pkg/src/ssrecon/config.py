"""Run configuration: documented defaults, JSON config files and range validation."""

import dataclasses
import json
import math
from dataclasses import dataclass

from .errors import ConfigError
from .sampling import GAUSSIAN, UNIFORM

SCHEME_ALIASES = {
    "uniform": UNIFORM,
    UNIFORM: UNIFORM,
    "gaussian": GAUSSIAN,
    GAUSSIAN: GAUSSIAN,
}
SOLVERS = ("cgsense", "tgv")
LOSSES = ("supervised", "selfsup")


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run. ``test_scans=None`` means ``scans // 3``."""

    # cohort
    scans: int = 30
    test_scans: int | None = None
    size: int = 64
    coils: int = 4
    noise_sigma: float = 0.01
    # sampling
    accel: int = 4
    acs: int = 8
    rho: float = 0.4
    split_scheme: str = GAUSSIAN
    sigma: float | None = None
    exclude_acs: bool = False
    seed: int = 0
    # baselines
    solver: str = "cgsense"
    cg_iters: int = 10
    cg_tol: float = 1e-10
    tgv_alpha1: float = 1e-2
    tgv_alpha0: float = 2e-2
    tgv_iters: int = 500
    # network
    unrolls: int = 10
    channels: int = 16
    res_blocks: int = 4
    kernel: int = 3
    # training
    loss: str = "selfsup"
    epochs: int = 50
    lr: float = 1e-3
    checkpoint_every: int = 0
    repeats: int = 3
    # paths
    data: str | None = None
    model: str | None = None
    out: str | None = None
    cache: str | None = None

    @property
    def n_test(self):
        return self.scans // 3 if self.test_scans is None else self.test_scans

    def replace(self, **changes):
        return parse_config(overrides={**self.to_dict(), **changes})

    def to_dict(self):
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
REAL_FIELDS = {"noise_sigma", "rho", "sigma", "cg_tol", "tgv_alpha1", "tgv_alpha0", "lr"}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _need_int(name, v, lo, hi=None):
    if not _is_int(v) or v < lo or (hi is not None and v > hi):
        upper = "inf" if hi is None else hi
        raise ConfigError(f"{name} must be an integer in [{lo}, {upper}], got {v!r}")


def _need_real(name, v, lo, hi=math.inf, lo_open=False, hi_open=False):
    ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
    if ok:
        ok = (v > lo if lo_open else v >= lo) and (v < hi if hi_open else v <= hi)
    if not ok:
        left = "(" if lo_open else "["
        right = ")" if hi_open or hi == math.inf else "]"
        raise ConfigError(f"{name} must be a real number in {left}{lo}, {hi}{right}, got {v!r}")


def validate(cfg):
    """Raise :class:`ConfigError` naming the first out-of-range parameter."""
    _need_int("scans", cfg.scans, 1)
    if cfg.test_scans is not None:
        _need_int("test_scans", cfg.test_scans, 0, cfg.scans)
    _need_int("size", cfg.size, 8)
    if cfg.size & (cfg.size - 1):
        raise ConfigError(f"size must be a power of two >= 8, got {cfg.size}")
    _need_int("coils", cfg.coils, 1)
    _need_real("noise_sigma", cfg.noise_sigma, 0.0)
    _need_int("accel", cfg.accel, 1)
    _need_int("acs", cfg.acs, 0, cfg.size)
    _need_real("rho", cfg.rho, 0.0, 1.0, lo_open=True, hi_open=True)
    if cfg.split_scheme not in SCHEME_ALIASES.values():
        raise ConfigError(f"split_scheme must be one of uniform, gaussian, got {cfg.split_scheme!r}")
    if not isinstance(cfg.exclude_acs, bool):
        raise ConfigError(f"exclude_acs must be true or false, got {cfg.exclude_acs!r}")
    if cfg.sigma is not None:
        _need_real("sigma", cfg.sigma, 0.0, lo_open=True)
    _need_int("seed", cfg.seed, 0, 2**64 - 1)
    if cfg.solver not in SOLVERS:
        raise ConfigError(f"solver must be one of {', '.join(SOLVERS)}, got {cfg.solver!r}")
    _need_int("cg_iters", cfg.cg_iters, 1)
    _need_real("cg_tol", cfg.cg_tol, 0.0)
    _need_real("tgv_alpha1", cfg.tgv_alpha1, 0.0, lo_open=True)
    _need_real("tgv_alpha0", cfg.tgv_alpha0, 0.0, lo_open=True)
    _need_int("tgv_iters", cfg.tgv_iters, 1)
    _need_int("unrolls", cfg.unrolls, 0)
    _need_int("channels", cfg.channels, 1)
    _need_int("res_blocks", cfg.res_blocks, 0)
    _need_int("kernel", cfg.kernel, 1, 7)
    if cfg.kernel % 2 == 0:
        raise ConfigError(f"kernel must be odd, got {cfg.kernel}")
    if cfg.loss not in LOSSES:
        raise ConfigError(f"loss must be one of {', '.join(LOSSES)}, got {cfg.loss!r}")
    _need_int("epochs", cfg.epochs, 0)
    _need_real("lr", cfg.lr, 0.0, lo_open=True)
    _need_int("checkpoint_every", cfg.checkpoint_every, 0)
    _need_int("repeats", cfg.repeats, 1)
    return cfg


def _normalize(values):
    out = {}
    for key, value in values.items():
        name = key.replace("-", "_")
        if name not in FIELDS:
            raise ConfigError(f"unknown configuration key {key!r}")
        if name == "split_scheme" and isinstance(value, str):
            if value not in SCHEME_ALIASES:
                raise ConfigError(f"split_scheme must be one of uniform, gaussian, got {value!r}")
            value = SCHEME_ALIASES[value]
        if name in REAL_FIELDS and _is_int(value):
            value = float(value)
        out[name] = value
    return out


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def parse_config(path=None, overrides=None):
    """Defaults, then values from the JSON file at ``path``, then ``overrides``."""
    values = {}
    if path is not None:
        values.update(_normalize(load_config_file(path)))
    if overrides:
        values.update(_normalize({k: v for k, v in overrides.items() if v is not None}))
    return validate(RunConfig(**values))
