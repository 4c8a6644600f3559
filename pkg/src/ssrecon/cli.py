"""Command-line interface: ``ssrecon <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Flags override values from ``--config FILE`` (JSON object keyed by flag name).
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, parse_config
from .dataio import (ensure_dir, generate_cohort, load_dataset, load_params, read_blob, read_json,
                     save_dataset, save_params, update_splits, write_blob, write_json, write_pgm)
from .errors import ConfigError, ReconError
from .experiments import (CGSENSE, LOSS_KINDS, SUITES, TGV, cohort_config, load_scans, net_config,
                          reconstruct_scan, resplit)
from .metrics import evaluate, sort_reports, write_metrics_csv
from .training import SELFSUP, fit

logger = logging.getLogger("ssrecon")

DEFAULTS = RunConfig()
# flags that are not RunConfig fields
_LOCAL = {"command", "suite", "config", "recon", "subset", "verbose"}


def _flag(group, name, type_, help_, choices=None):
    dest = name.replace("-", "_")
    default = getattr(DEFAULTS, dest, None)
    shown = "" if default is None else f" (default: {default})"
    group.add_argument(f"--{name}", dest=dest, type=type_, choices=choices, default=None,
                       help=help_ + shown)


def _cohort_flags(p):
    g = p.add_argument_group("cohort")
    _flag(g, "scans", int, "total number of scans")
    _flag(g, "test-scans", int, "held-out scans, taken from the end (default: scans // 3)")
    _flag(g, "size", int, "image size, power of two")
    _flag(g, "coils", int, "receive coils")
    _flag(g, "noise-sigma", float, "k-space noise std per real component")


def _sampling_flags(p):
    g = p.add_argument_group("sampling")
    _flag(g, "accel", int, "acceleration R of the line mask")
    _flag(g, "acs", int, "number of fully sampled center lines")
    _flag(g, "rho", float, "loss fraction |Lambda|/|Omega|, in (0, 1)")
    _flag(g, "split-scheme", str, "Lambda selection", choices=("uniform", "gaussian"))
    _flag(g, "sigma", float, "std of the Gaussian selection density (default: cols / 4)")
    g.add_argument("--exclude-acs", dest="exclude_acs", action="store_const", const=True, default=None,
                   help="keep ACS points out of Lambda")


def _solver_flags(p, with_solver=True):
    g = p.add_argument_group("solvers")
    if with_solver:
        _flag(g, "solver", str, "baseline reconstruction", choices=("cgsense", "tgv"))
    _flag(g, "cg-tol", float, "relative residual tolerance of standalone CG")
    _flag(g, "tgv-alpha1", float, "TGV first-order weight")
    _flag(g, "tgv-alpha0", float, "TGV second-order weight")
    _flag(g, "tgv-iters", int, "primal-dual iterations")


def _network_flags(p):
    g = p.add_argument_group("network")
    _flag(g, "unrolls", int, "unrolled iterations T")
    _flag(g, "cg-iters", int, "CG iterations per data-consistency unit and for CG-SENSE")
    _flag(g, "channels", int, "feature channels C")
    _flag(g, "res-blocks", int, "residual blocks B")
    _flag(g, "kernel", int, "convolution kernel size (odd)")


def _training_flags(p):
    g = p.add_argument_group("training")
    _flag(g, "loss", str, "training loss", choices=("supervised", "selfsup"))
    _flag(g, "epochs", int, "training epochs")
    _flag(g, "lr", float, "Adam learning rate")
    _flag(g, "checkpoint-every", int, "write a checkpoint every N epochs, 0 disables")


def _common(p):
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--seed", dest="seed", type=int, default=None, help="global seed (default: 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser():
    parser = argparse.ArgumentParser(prog="ssrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gen-data", help="generate a synthetic multi-coil cohort")
    _common(p)
    _cohort_flags(p)
    _sampling_flags(p)
    p.add_argument("--out", required=True, help="dataset directory")

    p = sub.add_parser("gen-split", help="(re)draw the Theta/Lambda split of every scan in a dataset")
    _common(p)
    _sampling_flags(p)
    p.add_argument("--data", required=True, help="dataset directory (updated in place)")

    p = sub.add_parser("train", help="train the unrolled network")
    _common(p)
    _cohort_flags(p)
    _sampling_flags(p)
    _network_flags(p)
    _training_flags(p)
    p.add_argument("--data", help="dataset directory (default: generate a cohort from the cohort flags)")
    p.add_argument("--out", required=True, help="model directory")

    p = sub.add_parser("reconstruct", help="reconstruct scans with a baseline solver or a trained model")
    _common(p)
    _solver_flags(p)
    g = p.add_argument_group("network")
    _flag(g, "cg-iters", int, "CG iterations for CG-SENSE")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", help="model directory; overrides --solver")
    p.add_argument("--subset", choices=("train", "test", "all"), default="test", help="scans to reconstruct")
    p.add_argument("--out", required=True, help="output directory for .ksrd and .pgm images")

    p = sub.add_parser("evaluate", help="NMSE/SSIM of reconstructions against reference images")
    _common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--recon", required=True, help="directory written by 'reconstruct'")
    p.add_argument("--out", required=True, help="metrics CSV path")

    p = sub.add_parser("experiment", help="run an experiment suite")
    p.add_argument("suite", choices=SUITES)
    _common(p)
    _cohort_flags(p)
    _sampling_flags(p)
    _solver_flags(p, with_solver=False)
    _network_flags(p)
    g = p.add_argument_group("training")
    _flag(g, "epochs", int, "training epochs")
    _flag(g, "lr", float, "Adam learning rate")
    _flag(g, "repeats", int, "training seeds for lambda-scheme")
    p.add_argument("--data", help="dataset directory (default: generate a cohort from the cohort flags)")
    p.add_argument("--cache", help="directory memoizing trained models across runs")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _config_from(args):
    overrides = {k: v for k, v in vars(args).items() if k not in _LOCAL and v is not None}
    return parse_config(args.config, overrides)


def _cmd_gen_data(args, cfg):
    scans = generate_cohort(cohort_config(cfg))
    if cfg.sigma is not None or cfg.exclude_acs:
        scans = resplit(scans, cfg.rho, cfg.split_scheme, cfg.seed, cfg.sigma, cfg.exclude_acs)
    manifest = save_dataset(cfg.out, scans, seed=cfg.seed, generator={
        "scans": cfg.scans, "test_scans": cfg.n_test, "size": cfg.size, "coils": cfg.coils,
        "noise_sigma": cfg.noise_sigma, "accel": cfg.accel, "acs": cfg.acs, "rho": cfg.rho,
        "split_scheme": cfg.split_scheme, "sigma": cfg.sigma, "exclude_acs": cfg.exclude_acs,
    })
    print(f"wrote {manifest['scan_count']} scans to {cfg.out}")


def _cmd_gen_split(args, cfg):
    _, scans = load_dataset(cfg.data)
    scans = resplit(scans, cfg.rho, cfg.split_scheme, cfg.seed, cfg.sigma, cfg.exclude_acs)
    update_splits(cfg.data, scans)
    lam = scans[0].split.lam.sum() if scans else 0
    print(f"split {len(scans)} scans at rho={cfg.rho} ({cfg.split_scheme}), |Lambda|={lam} per scan")


def _cmd_train(args, cfg):
    scans = [s for s in load_scans(cfg) if s.subset == "train"]
    kind = LOSS_KINDS[cfg.loss]
    if kind == SELFSUP and any(s.split is None for s in scans):
        scans = resplit(scans, cfg.rho, cfg.split_scheme, cfg.seed, cfg.sigma, cfg.exclude_acs)
    out = ensure_dir(cfg.out)
    meta = {"loss": cfg.loss, "seed": cfg.seed, "epochs": cfg.epochs, "lr": cfg.lr, "version": __version__}

    def on_epoch(epoch, params, mean):
        if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_params(out / f"checkpoint_{epoch:04d}", params, {**meta, "epoch": epoch, "loss_value": mean})

    result = fit(scans, net_config(cfg), kind, cfg.epochs, cfg.seed, lr=cfg.lr, on_epoch=on_epoch)
    save_params(out, result.params, {**meta, "trace": result.trace})
    final = f"{result.trace[-1]:.6f}" if result.trace else "n/a"
    print(f"trained on {len(scans)} scans for {cfg.epochs} epochs, final loss {final}, mu {result.params.mu:.4f}")


def _subset(scans, which):
    return scans if which == "all" else [s for s in scans if s.subset == which]


def _cmd_reconstruct(args, cfg):
    _, scans = load_dataset(cfg.data)
    scans = _subset(scans, args.subset)
    if args.model is not None:
        params, _ = load_params(args.model)
        method, kind = "network", "network"
    else:
        params, method = None, cfg.solver
        kind = {"cgsense": CGSENSE, "tgv": TGV}[cfg.solver]
    out = ensure_dir(cfg.out)
    for s in scans:
        rec = reconstruct_scan(kind, s, cfg, params)
        write_blob(out / f"{s.scan_id}.ksrd", rec)
        write_pgm(out / f"{s.scan_id}.pgm", rec)
    write_json(out / "reconstruction.json", {
        "method": method, "model": args.model, "scans": [s.scan_id for s in scans], "config": cfg.to_dict()})
    print(f"reconstructed {len(scans)} scans with {method} into {out}")


def _cmd_evaluate(args, cfg):
    _, scans = load_dataset(cfg.data)
    recon = Path(args.recon)
    info_path = recon / "reconstruction.json"
    if not info_path.exists():
        raise FileNotFoundError(f"no reconstruction.json in {recon}")
    info = read_json(info_path)
    by_id = {s.scan_id: s for s in scans}
    reports = []
    for scan_id in info["scans"]:
        scan = by_id.get(scan_id)
        if scan is None:
            raise ConfigError(f"{scan_id} is not part of dataset {cfg.data}")
        if scan.ref_image is None:
            raise ConfigError(f"{scan_id} has no reference image")
        path = recon / f"{scan_id}.ksrd"
        if not path.exists():
            raise FileNotFoundError(f"missing reconstruction {path}")
        reports.append(evaluate(scan_id, info["method"], scan.ref_image, read_blob(path)))
    reports = sort_reports(reports)
    write_metrics_csv(cfg.out, reports)
    if reports:
        print(f"{info['method']}: mean NMSE {np.mean([r.nmse for r in reports]):.6g}, "
              f"mean SSIM {np.mean([r.ssim for r in reports]):.6g} over {len(reports)} scans")


def _cmd_experiment(args, cfg):
    from .experiments import run_suite

    result = run_suite(args.suite, cfg)
    for name, stats in result.summary.items():
        print(f"{name:40s} NMSE {stats['nmse_mean']:.6g} +- {stats['nmse_std']:.3g}  "
              f"SSIM {stats['ssim_mean']:.4f}")
    print(f"wrote {result.csv_path}")


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "gen-split": _cmd_gen_split,
    "train": _cmd_train,
    "reconstruct": _cmd_reconstruct,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
}


def run(argv=None):
    """Run the CLI with ``argv`` (without the program name) and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config_from(args)
        _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"ssrecon {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ReconError, ValueError, ArithmeticError, OSError) as exc:
        print(f"ssrecon {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run(sys.argv[1:]))
