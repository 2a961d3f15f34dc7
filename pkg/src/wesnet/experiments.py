"""Experiment orchestration: configs, BER sweeps, training runs and CSV files.

Monte-Carlo work is split into ``monte_carlo_rounds`` rounds per SNR point.
Round ``k`` of detector ``det`` at SNR index ``i`` draws everything from the
stream ``(seed, 2, crc32(det), i, k)``, so a round's result depends only on
its address. Rounds may run on any number of threads; integer error counts
are summed in round order afterwards.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .baselines import SdrConfig, ml_detect, mmse_detect, sdr_detect, zf_detect
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .complexity import classical_report, network_report
from .exceptions import ConfigError, OutputExistsError, TrainingDivergedError
from .mimo import bit_errors, generate_batch
from .network import NetConfig, TrainConfig, detect, train, xavier_init
from .rng import RngStream, name_to_id

log = logging.getLogger(__name__)

CLASSICAL = ("zf", "mmse", "ml", "sdr")
LEARNED = ("wesnet",)
BER_COLUMNS = ("detector", "snr_db", "trials", "bit_count", "error_count", "ber", "ci95")
FLOPS_COLUMNS = ("detector", "nt", "layers", "keep_fraction", "analytic_flops",
                 "measured_macs", "parameters")
# runtime knobs that never change results
_UNHASHED = ("threads", "overwrite", "out_dir", "checkpoint")


@dataclass
class ExperimentConfig:
    # network
    nt: int = 4
    nr: int = 8
    modulation: str = "bpsk"
    layers: Optional[int] = 12
    profile: str = "halfexp"             # linear | halfexp | constant | learnable
    learnable_init: str = "halfexp"      # starting shape when profile == learnable
    keep_fraction: float = 0.5
    lam: float = 1e-3
    reg_start_layer: int = 1
    psi_t: float = 0.5
    normalize_inputs: bool = True
    # training
    iterations: int = 2000
    batch: int = 500
    train_snr_min: float = 8.0
    train_snr_max: float = 14.0
    learning_rate: float = 1e-2
    lr_schedule: str = "cosine"
    lr_min: float = 1e-3
    seed: int = 0
    # evaluation
    snr_grid: list = field(default_factory=lambda: [8.0, 10.0, 12.0])
    trials: int = 10000
    monte_carlo_rounds: int = 200
    detectors: list = field(default_factory=lambda: ["zf", "mmse", "ml", "sdr", "wesnet"])
    truncate_layers: Optional[int] = None
    sdr_iterations: int = 500
    sdr_rounding_samples: int = 100
    # runtime
    threads: int = 1
    overwrite: bool = False
    out_dir: str = "out"
    checkpoint: Optional[str] = None

    def __post_init__(self):
        self.snr_grid = [float(s) for s in self.snr_grid]
        self.detectors = [str(d).lower() for d in self.detectors]
        if any(b < a for a, b in zip(self.snr_grid, self.snr_grid[1:])):
            raise ConfigError("snr_grid must be sorted ascending")
        if not self.snr_grid:
            raise ConfigError("snr_grid must not be empty")
        if self.trials < 1 or self.monte_carlo_rounds < 1:
            raise ConfigError("trials and monte_carlo_rounds must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        unknown = set(self.detectors) - set(CLASSICAL + LEARNED)
        if unknown:
            raise ConfigError(f"unknown detectors {sorted(unknown)}")
        if self.truncate_layers is not None and self.truncate_layers < 1:
            raise ConfigError("truncate_layers must be >= 1")
        # validates the network and training fields early
        self.net_config()
        self.train_config()

    # -- derived configs -------------------------------------------------
    def net_config(self) -> NetConfig:
        learnable = self.profile == "learnable"
        return NetConfig(
            nt=self.nt, nr=self.nr, modulation=self.modulation, layers=self.layers,
            profile=self.learnable_init if learnable else self.profile,
            keep_fraction=self.keep_fraction, learnable_beta=learnable, lam=self.lam,
            reg_start_layer=self.reg_start_layer, psi_t=self.psi_t,
            normalize_inputs=self.normalize_inputs)

    def train_config(self) -> TrainConfig:
        return TrainConfig(iterations=self.iterations, batch=self.batch,
                           snr_lo=self.train_snr_min, snr_hi=self.train_snr_max,
                           seed=self.seed, learning_rate=self.learning_rate,
                           lr_schedule=self.lr_schedule, lr_min=self.lr_min)

    def sdr_config(self) -> SdrConfig:
        return SdrConfig(admm_iterations=self.sdr_iterations,
                         rounding_samples=self.sdr_rounding_samples)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a flat mapping of config keys")
        nested = [k for k, v in data.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"{path}: nested sections are not allowed ({', '.join(nested)})")
        return cls.from_dict(data)


def config_hash(cfg: ExperimentConfig) -> str:
    """Digest of every result-affecting field (runtime knobs excluded)."""
    data = {k: v for k, v in cfg.as_dict().items() if k not in _UNHASHED}
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# BER curves


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    trials: int
    bit_count: int
    error_count: int

    @property
    def ber(self) -> float:
        return self.error_count / self.bit_count

    @property
    def ci95(self) -> float:
        """Half-width of the binomial normal-approximation 95% interval."""
        p = self.ber
        return 1.959963984540054 * math.sqrt(p * (1.0 - p) / self.bit_count)


@dataclass
class BerCurve:
    detector: str
    points: list
    config_hash: str = ""

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.snr_db)

    def at(self, snr_db: float) -> BerPoint:
        for p in self.points:
            if p.snr_db == snr_db:
                return p
        raise KeyError(snr_db)


def round_sizes(trials: int, rounds: int) -> list:
    """Split ``trials`` into at most ``rounds`` near-equal positive chunks."""
    rounds = min(rounds, trials)
    base, extra = divmod(trials, rounds)
    return [base + (1 if k < extra else 0) for k in range(rounds)]


def _round_stream(seed, detector, snr_index, round_index) -> RngStream:
    return RngStream(seed, (2, name_to_id(detector), snr_index, round_index))


def _run_round(detector, cfg: ExperimentConfig, net, snr, snr_index, k, n) -> int:
    rng = _round_stream(cfg.seed, detector, snr_index, k)
    batch = generate_batch(rng.child(0), cfg.nt, cfg.nr, cfg.modulation, snr, snr, n)
    H, y = batch.H, batch.y
    if detector == "zf":
        est = zf_detect(H, y, cfg.modulation).hard
    elif detector == "mmse":
        est = mmse_detect(H, y, batch.sigma, cfg.modulation).hard
    elif detector == "ml":
        est = ml_detect(H, y, cfg.modulation).hard
    elif detector == "sdr":
        est = sdr_detect(H, y, cfg.sdr_config(), rng.child(1), cfg.modulation).hard
    else:
        net_cfg, params = net
        est = detect(params, H, y, net_cfg, cfg.truncate_layers).hard
    return int(np.count_nonzero(bit_errors(batch.s, est)))


def _load_learned(cfg: ExperimentConfig, checkpoint=None):
    if checkpoint is None:
        if cfg.checkpoint is None:
            raise ConfigError("the wesnet detector needs a checkpoint (set 'checkpoint')")
        if not Path(cfg.checkpoint).is_file():
            raise ConfigError(f"checkpoint {cfg.checkpoint} does not exist")
        checkpoint = load_checkpoint(cfg.checkpoint)
    net_cfg = checkpoint.net_config
    if (net_cfg.nt, net_cfg.nr, net_cfg.modulation) != (cfg.nt, cfg.nr, cfg.modulation):
        raise ConfigError("checkpoint antenna/modulation settings differ from the sweep config")
    if cfg.truncate_layers is not None and cfg.truncate_layers > net_cfg.layers:
        raise ConfigError(f"truncate_layers {cfg.truncate_layers} > network depth {net_cfg.layers}")
    return net_cfg, checkpoint.params


def run_ber_sweep(cfg: ExperimentConfig, checkpoint: Optional[Checkpoint] = None,
                  detectors=None) -> list:
    """BER curves for ``detectors`` (default ``cfg.detectors``) over ``cfg.snr_grid``."""
    detectors = list(cfg.detectors if detectors is None else detectors)
    net = _load_learned(cfg, checkpoint) if any(d in LEARNED for d in detectors) else None
    d = (cfg.nt if cfg.modulation == "bpsk" else 2 * cfg.nt)
    sizes = round_sizes(cfg.trials, cfg.monte_carlo_rounds)
    tasks = [(det, i, k) for det in detectors for i in range(len(cfg.snr_grid))
             for k in range(len(sizes))]

    def work(task):
        det, i, k = task
        return _run_round(det, cfg, net, cfg.snr_grid[i], i, k, sizes[k])

    if cfg.threads == 1:
        counts = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            counts = list(pool.map(work, tasks))
    errors = {}
    for (det, i, _), c in zip(tasks, counts):
        errors[det, i] = errors.get((det, i), 0) + c
    h = config_hash(cfg)
    curves = []
    for det in detectors:
        pts = [BerPoint(snr, cfg.trials, cfg.trials * d, errors[det, i])
               for i, snr in enumerate(cfg.snr_grid)]
        curves.append(BerCurve(det, pts, h))
    return curves


# ---------------------------------------------------------------------------
# training and complexity


@dataclass
class TrainOutcome:
    checkpoint_path: Path
    loss_path: Path
    losses: np.ndarray
    wall_time: float
    config_hash: str
    checkpoint: Checkpoint


def run_train(cfg: ExperimentConfig, out_dir=None, checkpoint_name: str = "model.ckpt",
              callback=None) -> TrainOutcome:
    """Train, then write the checkpoint and a per-iteration loss CSV."""
    out = Path(out_dir or cfg.out_dir)
    net_cfg = cfg.net_config()
    h = config_hash(cfg)
    ckpt_path = out / checkpoint_name
    loss_path = out / "train_loss.csv"
    for p in (ckpt_path, loss_path):
        _check_overwrite(p, cfg.overwrite)
    t0 = time.perf_counter()
    try:
        result = train(net_cfg, cfg.train_config(), callback=callback)
    except TrainingDivergedError as exc:
        if exc.last_good is not None:
            path = save_checkpoint(exc.last_good, None, net_cfg, out / "last_good.ckpt",
                                   experiment=cfg.as_dict(), config_hash=h)
            exc.checkpoint_path = path
        raise
    wall = time.perf_counter() - t0
    save_checkpoint(result.params, result.adam, net_cfg, ckpt_path,
                    experiment=cfg.as_dict(), config_hash=h)
    rows = [{"iteration": i, "loss": repr(float(v))} for i, v in enumerate(result.losses)]
    _write_csv(loss_path, ("iteration", "loss"), rows, h,
               extra=[f"wall_time_s: {wall:.3f}"])
    log.info("trained %d iterations in %.1f s", cfg.iterations, wall)
    ckpt = Checkpoint(net_cfg, result.params, result.adam, cfg.as_dict(), h)
    return TrainOutcome(ckpt_path, loss_path, result.losses, wall, h, ckpt)


def run_flops(cfg: ExperimentConfig, checkpoint: Optional[Checkpoint] = None) -> list:
    """Analytic and measured complexity for the classical and learned detectors."""
    size = 2 if cfg.modulation == "bpsk" else 4
    reports = [classical_report(det, cfg.nt, size) for det in ("zf", "mmse", "ml")]
    reports.append(classical_report("sdr", cfg.nt, size, n_iterations=cfg.sdr_iterations))
    net_cfg = cfg.net_config() if checkpoint is None else checkpoint.net_config
    params = (xavier_init(RngStream(cfg.seed, 0), net_cfg) if checkpoint is None
              else checkpoint.params)
    dense_cfg = dataclasses.replace(net_cfg, profile="constant", keep_fraction=1.0,
                                    learnable_beta=False)
    dense = xavier_init(RngStream(cfg.seed, 0), dense_cfg)
    reports.append(network_report(dense, dense_cfg, cfg.truncate_layers, detnet=True))
    reports.append(network_report(params, net_cfg, cfg.truncate_layers))
    return reports


# ---------------------------------------------------------------------------
# CSV


def _check_overwrite(path: Path, overwrite: bool):
    if path.exists() and not overwrite:
        raise OutputExistsError(f"{path} already exists; pass --overwrite to replace it")


def _write_csv(path, columns, rows, config_hash_: str, overwrite: bool = True, extra=()):
    path = Path(path)
    _check_overwrite(path, overwrite)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# config_hash: {config_hash_}\n")
            for line in extra:
                fh.write(f"# {line}\n")
            writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(items, path, kind: str = "ber", config_hash_: str = "", overwrite: bool = False):
    """Write BER curves (``kind="ber"``) or complexity reports (``kind="flops"``)."""
    if kind == "ber":
        rows = []
        for curve in items:
            for p in curve.points:
                rows.append({"detector": curve.detector, "snr_db": _fmt(float(p.snr_db)),
                             "trials": p.trials, "bit_count": p.bit_count,
                             "error_count": p.error_count, "ber": _fmt(float(p.ber)),
                             "ci95": _fmt(float(p.ci95))})
        columns = BER_COLUMNS
    elif kind == "flops":
        rows = [{"detector": r.detector, "nt": r.nt, "layers": _fmt(r.layers),
                 "keep_fraction": _fmt(None if r.keep_fraction is None else float(r.keep_fraction)),
                 "analytic_flops": r.analytic_flops, "measured_macs": _fmt(r.measured_macs),
                 "parameters": r.parameters} for r in items]
        columns = FLOPS_COLUMNS
    else:
        raise ConfigError(f"unknown CSV kind {kind!r}")
    return _write_csv(path, columns, rows, config_hash_, overwrite)


def _num(text, conv):
    return None if text == "" else conv(text)


def parse_csv(path):
    """Read a file written by :func:`emit_csv`; returns ``(config_hash, kind, items)``.

    BER files come back as a list of :class:`BerCurve`; complexity files as a
    list of dicts with numeric fields converted.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    h = ""
    body = []
    for line in lines:
        if line.startswith("# config_hash:"):
            h = line.split(":", 1)[1].strip()
        elif line.startswith("#"):
            continue
        elif line:
            body.append(line)
    reader = csv.DictReader(body)
    columns = tuple(reader.fieldnames or ())
    if columns == BER_COLUMNS:
        curves: dict = {}
        for row in reader:
            pt = BerPoint(float(row["snr_db"]), int(row["trials"]), int(row["bit_count"]),
                          int(row["error_count"]))
            curves.setdefault(row["detector"], []).append(pt)
        return h, "ber", [BerCurve(k, v, h) for k, v in curves.items()]
    if columns == FLOPS_COLUMNS:
        rows = []
        for row in reader:
            rows.append({"detector": row["detector"], "nt": int(row["nt"]),
                         "layers": _num(row["layers"], int),
                         "keep_fraction": _num(row["keep_fraction"], float),
                         "analytic_flops": int(row["analytic_flops"]),
                         "measured_macs": _num(row["measured_macs"], int),
                         "parameters": int(row["parameters"])})
        return h, "flops", rows
    raise ConfigError(f"{path}: unrecognised columns {columns}")
