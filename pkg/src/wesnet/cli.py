"""Command line entry point: ``wesnet {train,eval,baselines,flops,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ContractError, NumericalError, TrainingDivergedError
from .experiments import (
    CLASSICAL, ExperimentConfig, config_hash, emit_csv, run_ber_sweep, run_flops, run_train,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("wesnet")

# flag -> config field
_FLAG_FIELDS = {
    "seed": "seed", "nt": "nt", "nr": "nr", "mod": "modulation", "layers": "layers",
    "profile": "profile", "keep_frac": "keep_fraction", "lam": "lam",
    "truncate_layers": "truncate_layers", "trials": "trials", "threads": "threads",
    "out": "out_dir", "checkpoint": "checkpoint", "iterations": "iterations",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat YAML file of ExperimentConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--nt", type=int)
    common.add_argument("--nr", type=int)
    common.add_argument("--mod", choices=("bpsk", "qam4"))
    common.add_argument("--layers", type=int)
    common.add_argument("--profile", choices=("linear", "halfexp", "learnable", "constant"))
    common.add_argument("--keep-frac", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--truncate-layers", type=int)
    common.add_argument("--snr-min", type=float)
    common.add_argument("--snr-max", type=float)
    common.add_argument("--snr-step", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--iterations", type=int)
    common.add_argument("--checkpoint", type=str, help="checkpoint to evaluate")
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("--overwrite", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="wesnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train a network and write a checkpoint")
    sub.add_parser("eval", parents=[common], help="BER sweep of a trained checkpoint")
    sub.add_parser("baselines", parents=[common], help="BER sweep of ZF, MMSE, ML and SDR")
    sub.add_parser("flops", parents=[common], help="analytic and measured complexity")
    sub.add_parser("sweep", parents=[common], help="BER sweep of every configured detector")
    return parser


def snr_grid(lo: float, hi: float, step: float) -> list:
    if step <= 0:
        raise ConfigError("--snr-step must be positive")
    if hi < lo:
        raise ConfigError("--snr-max must not be below --snr-min")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [float(round(lo + i * step, 10)) for i in range(n)]


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    updates = {}
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            updates[name] = value
    if args.overwrite:
        updates["overwrite"] = True
    if any(v is not None for v in (args.snr_min, args.snr_max, args.snr_step)):
        lo = args.snr_min if args.snr_min is not None else cfg.snr_grid[0]
        hi = args.snr_max if args.snr_max is not None else cfg.snr_grid[-1]
        step = args.snr_step if args.snr_step is not None else 1.0
        updates["snr_grid"] = snr_grid(lo, hi, step)
    if args.command == "eval":
        updates["detectors"] = ["wesnet"]
        if "checkpoint" not in updates and cfg.checkpoint is None:
            updates["checkpoint"] = str(Path(updates.get("out_dir", cfg.out_dir)) / "model.ckpt")
    elif args.command == "baselines":
        updates["detectors"] = list(CLASSICAL)
    try:
        return cfg.replace(**updates)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def _run(args) -> int:
    cfg = resolve_config(args)
    out = _prepare_out(cfg)
    h = config_hash(cfg)
    if args.command == "train":
        res = run_train(cfg, out)
        print(f"checkpoint: {res.checkpoint_path}")
        print(f"loss log: {res.loss_path}")
        print(f"final loss {res.losses[-1]:.6g} after {cfg.iterations} iterations "
              f"({res.wall_time:.1f} s, config {h})")
    elif args.command in ("eval", "baselines", "sweep"):
        curves = run_ber_sweep(cfg)
        path = emit_csv(curves, out / f"ber_{args.command}.csv", "ber", h, cfg.overwrite)
        for c in curves:
            for p in c.points:
                print(f"{c.detector:>7s} {p.snr_db:6.2f} dB  BER {p.ber:.3e} +- {p.ci95:.1e}")
        print(f"wrote {path}")
    else:
        ckpt = None
        if cfg.checkpoint is not None:
            from .checkpoint import load_checkpoint
            ckpt = load_checkpoint(cfg.checkpoint)
        reports = run_flops(cfg, ckpt)
        path = emit_csv(reports, out / "flops.csv", "flops", h, cfg.overwrite)
        for r in reports:
            print(f"{r.detector:>7s} analytic {r.analytic_flops:>12d}  measured {r.measured_macs}")
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        where = f"; last good parameters saved to {exc.checkpoint_path}" if exc.checkpoint_path else ""
        print(f"training diverged: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
