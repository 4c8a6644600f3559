"""Experiment suites on synthetic cohorts: Lambda-scheme study, rho sweep, method comparison.

Each suite trains the networks it needs, reconstructs every test scan with
every method, and writes ``<suite>.csv``, per-scan PGM magnitude images under
``images/<scan_id>/`` and ``provenance.json`` into the output directory.
"""

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import SCHEME_ALIASES
from .dataio import (CohortConfig, ensure_dir, generate_cohort, load_dataset, load_params, save_params,
                     write_json, write_pgm)
from .encoding import SenseOperator
from .errors import ConfigError
from .metrics import evaluate, sort_reports, write_metrics_csv
from .network import NetConfig, unrolled_forward
from .sampling import GAUSSIAN, UNIFORM, derive_seed, split_omega
from .solvers import cg_sense, tgv_reconstruct
from .training import SELFSUP, SUPERVISED, fit

logger = logging.getLogger(__name__)

CGSENSE = "cgsense"
TGV = "tgv"
SUPERVISED_NET = "supervised"
SELFSUP_NET = "selfsup"
RHO_SWEEP = (0.05, 0.1, 0.2, 0.3, 0.4)
LAMBDA_RHO = 0.1
SUITES = ("lambda-scheme", "rho-sweep", "compare")
LOSS_KINDS = {"supervised": SUPERVISED, "selfsup": SELFSUP}


def worker_count():
    """Worker cap from ``RECON_THREADS``, defaulting to the number of cores."""
    raw = os.environ.get("RECON_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"RECON_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"RECON_THREADS must be a positive integer, got {raw!r}")
    return n


def cohort_config(cfg):
    return CohortConfig(scans=cfg.scans, test_scans=cfg.n_test, size=cfg.size, coils=cfg.coils,
                        noise_sigma=cfg.noise_sigma, accel=cfg.accel, acs=cfg.acs, rho=cfg.rho,
                        scheme=cfg.split_scheme, seed=cfg.seed)


def net_config(cfg):
    return NetConfig(unrolls=cfg.unrolls, cg_iters=cfg.cg_iters, channels=cfg.channels,
                     res_blocks=cfg.res_blocks, kernel=cfg.kernel)


def load_scans(cfg):
    """Scans from ``cfg.data`` if given, otherwise a freshly generated cohort."""
    if cfg.data is not None:
        _, scans = load_dataset(cfg.data)
        return scans
    return generate_cohort(cohort_config(cfg))


def resplit(scans, rho, scheme, seed, sigma=None, exclude_acs=False):
    """New Theta/Lambda split for every scan; scan ``k`` (cohort order) uses seed ``(seed, k, 4)``."""
    scheme = SCHEME_ALIASES.get(scheme, scheme)
    return [s.with_split(split_omega(s.mask, rho, scheme, derive_seed(seed, k, 4), sigma, exclude_acs))
            for k, s in enumerate(scans)]


def _fingerprint(scans):
    h = hashlib.sha256()
    for s in scans:
        h.update(s.scan_id.encode())
        h.update(np.ascontiguousarray(s.kspace).tobytes())
        h.update(np.ascontiguousarray(s.sens).tobytes())
        if s.split is not None:
            h.update(s.split.codes().tobytes())
        if s.ref_image is not None:
            h.update(np.ascontiguousarray(s.ref_image).tobytes())
    return h.hexdigest()


def train_model(train_scans, cfg, kind, seed, cache=None):
    """Fit one network on ``train_scans`` (splits already attached), optionally memoized on disk.

    The cache key covers the exact training data, the network configuration,
    the loss, seed, epochs and learning rate.
    """
    ncfg = net_config(cfg)
    key = {
        "data": _fingerprint(train_scans),
        "net": ncfg.__dict__,
        "kind": kind,
        "seed": seed,
        "epochs": cfg.epochs,
        "lr": cfg.lr,
    }
    digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:20]
    slot = None if cache is None else Path(cache) / digest
    if slot is not None and (slot / "model.json").exists():
        params, _ = load_params(slot)
        logger.info("reusing cached model %s", digest)
        return params
    result = fit(train_scans, ncfg, kind, cfg.epochs, seed, lr=cfg.lr)
    if slot is not None:
        save_params(slot, result.params, {"cache_key": key, "trace": result.trace})
    return result.params


def reconstruct_scan(method, scan, cfg, params=None):
    """Reconstruct ``scan`` from all acquired samples with a baseline solver or a trained network."""
    op = SenseOperator(scan.sens, scan.mask)
    if method == CGSENSE:
        return cg_sense(op, scan.kspace, cfg.cg_iters, cfg.cg_tol)[0]
    if method == TGV:
        return tgv_reconstruct(op, scan.kspace, cfg.tgv_alpha1, cfg.tgv_alpha0, cfg.tgv_iters)
    if params is None:
        raise ConfigError(f"method {method!r} needs trained parameters")
    return unrolled_forward(params, op, scan.kspace)


@dataclass(frozen=True)
class Method:
    """One CSV method column entry: a label, how to reconstruct, and its split metadata."""

    label: str
    kind: str
    params: object = None
    rho: float | None = None
    scheme: str | None = None

    @property
    def image_name(self):
        parts = [self.label]
        if self.rho is not None:
            parts.append(f"rho{self.rho:g}")
        if self.scheme is not None:
            parts.append(self.scheme)
        return "_".join(parts) + ".pgm"


@dataclass
class SuiteResult:
    suite: str
    csv_path: Path
    reports: list
    summary: dict = field(default_factory=dict)


def _evaluate_scan(scan, methods, cfg, image_dir):
    reports = []
    if image_dir is not None:
        sdir = ensure_dir(Path(image_dir) / scan.scan_id)
        write_pgm(sdir / "reference.pgm", scan.ref_image)
    for m in methods:
        rec = reconstruct_scan(m.kind, scan, cfg, m.params)
        reports.append(evaluate(scan.scan_id, m.label, scan.ref_image, rec, m.rho, m.scheme))
        if image_dir is not None:
            write_pgm(sdir / m.image_name, rec)
    return reports


def evaluate_methods(test_scans, methods, cfg, image_dir=None):
    """Metrics (and optionally PGM images) for every test scan and method, scans in parallel."""
    missing = [s.scan_id for s in test_scans if s.ref_image is None]
    if missing:
        raise ConfigError(f"test scans without reference image: {', '.join(missing)}")
    workers = min(worker_count(), max(1, len(test_scans)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        per_scan = list(pool.map(lambda s: _evaluate_scan(s, methods, cfg, image_dir), test_scans))
    return sort_reports([r for rs in per_scan for r in rs])


def _split_subsets(scans):
    train = [s for s in scans if s.subset == "train"]
    test = [s for s in scans if s.subset == "test"]
    if not train or not test:
        raise ConfigError(f"experiments need train and test scans, got {len(train)} train / {len(test)} test")
    return train, test


def _train_for(scans, cfg, kind, rho, scheme, seed, cache):
    """Train on the train subset of ``scans`` after re-splitting the whole cohort."""
    if kind == SELFSUP:
        scans = resplit(scans, rho, scheme, seed, cfg.sigma, cfg.exclude_acs)
    train, _ = _split_subsets(scans)
    return train_model(train, cfg, kind, seed, cache)


def _mean_nmse(reports, label):
    values = [r.nmse for r in reports if r.method == label]
    return float(np.mean(values))


def run_compare(cfg, scans, cache=None):
    _, test = _split_subsets(scans)
    sup = _train_for(scans, cfg, SUPERVISED, None, None, cfg.seed, cache)
    ss = _train_for(scans, cfg, SELFSUP, cfg.rho, cfg.split_scheme, cfg.seed, cache)
    methods = [
        Method(CGSENSE, CGSENSE),
        Method(TGV, TGV),
        Method(SUPERVISED_NET, "network", sup),
        Method(SELFSUP_NET, "network", ss, cfg.rho, cfg.split_scheme),
    ]
    return methods, test


def run_rho_sweep(cfg, scans, cache=None):
    _, test = _split_subsets(scans)
    methods = []
    for rho in RHO_SWEEP:
        params = _train_for(scans, cfg, SELFSUP, rho, cfg.split_scheme, cfg.seed, cache)
        methods.append(Method(SELFSUP_NET, "network", params, rho, cfg.split_scheme))
    return methods, test


def run_lambda_scheme(cfg, scans, cache=None):
    _, test = _split_subsets(scans)
    methods = []
    for r in range(cfg.repeats):
        seed = cfg.seed + r
        for scheme in (UNIFORM, GAUSSIAN):
            params = _train_for(scans, cfg, SELFSUP, LAMBDA_RHO, scheme, seed, cache)
            methods.append(Method(f"{SELFSUP_NET}-seed{seed}", "network", params, LAMBDA_RHO, scheme))
    return methods, test


_RUNNERS = {"compare": run_compare, "rho-sweep": run_rho_sweep, "lambda-scheme": run_lambda_scheme}


def summarize(reports):
    """Mean and population std of test NMSE/SSIM per (method, rho, scheme)."""
    groups = {}
    for r in reports:
        groups.setdefault((r.method, r.rho, r.scheme), []).append(r)
    out = {}
    for (method, rho, scheme), rs in sorted(groups.items(), key=lambda kv: str(kv[0])):
        name = method + ("" if rho is None else f"@rho={rho:g}") + ("" if scheme is None else f"/{scheme}")
        nm = np.array([r.nmse for r in rs])
        ss = np.array([r.ssim for r in rs])
        out[name] = {"nmse_mean": float(nm.mean()), "nmse_std": float(nm.std()),
                     "ssim_mean": float(ss.mean()), "ssim_std": float(ss.std()), "count": len(rs)}
    return out


def run_suite(suite, cfg, scans=None, cache=None):
    """Run a named suite and write its CSV, images and provenance under ``cfg.out``."""
    if suite not in _RUNNERS:
        raise ConfigError(f"unknown experiment {suite!r}; choose from {', '.join(SUITES)}")
    if cfg.out is None:
        raise ConfigError("experiments need an output directory (--out)")
    if scans is None:
        scans = load_scans(cfg)
    cache = cache if cache is not None else cfg.cache
    out = ensure_dir(cfg.out)
    methods, test = _RUNNERS[suite](cfg, scans, cache)
    reports = evaluate_methods(test, methods, cfg, out / "images")
    csv_path = out / f"{suite}.csv"
    write_metrics_csv(csv_path, reports)
    summary = summarize(reports)
    write_json(out / "provenance.json", {
        "artifact": "ssrecon",
        "version": __version__,
        "suite": suite,
        "config": cfg.to_dict(),
        "kernel_backend": kernels.BACKEND,
        "train_scans": [s.scan_id for s in scans if s.subset == "train"],
        "test_scans": [s.scan_id for s in test],
        "methods": [m.label for m in methods],
        "summary": summary,
    })
    return SuiteResult(suite, csv_path, reports, summary)
