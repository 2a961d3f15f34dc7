import dataclasses

import numpy as np
import pytest

from wesnet.checkpoint import load_checkpoint
from wesnet.exceptions import ConfigError, OutputExistsError
from wesnet.experiments import (
    BER_COLUMNS, FLOPS_COLUMNS, BerCurve, BerPoint, ExperimentConfig, config_hash, emit_csv,
    parse_csv, round_sizes, run_ber_sweep, run_flops, run_train,
)

SMALL = dict(nt=2, nr=4, layers=4, iterations=30, batch=64, trials=400, monte_carlo_rounds=8,
             snr_grid=[6.0, 10.0], sdr_iterations=40, sdr_rounding_samples=8)


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    cfg = small(out_dir=str(out))
    return cfg, run_train(cfg, out)


def test_ber_csv_golden_layout(tmp_path):
    curve = BerCurve("zf", [BerPoint(10.0, 100, 400, 4), BerPoint(8.0, 100, 400, 10)], "h")
    path = emit_csv([curve], tmp_path / "b.csv", "ber", "deadbeef")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash: deadbeef"
    assert lines[1] == ",".join(BER_COLUMNS)
    assert lines[2] == "zf,8.0,100,400,10,0.025,%r" % BerPoint(8.0, 100, 400, 10).ci95
    assert lines[3].startswith("zf,10.0,100,400,4,0.01,")
    h, kind, back = parse_csv(path)
    assert (h, kind) == ("deadbeef", "ber")
    assert back[0].points == curve.points


def test_empty_csv_is_header_only(tmp_path):
    path = emit_csv([], tmp_path / "e.csv", "ber", "x")
    assert path.read_text().splitlines() == ["# config_hash: x", ",".join(BER_COLUMNS)]
    assert parse_csv(path) == ("x", "ber", [])
    with pytest.raises(ConfigError):
        emit_csv([], tmp_path / "q.csv", "pdf")


def test_overwrite_refused_then_allowed(tmp_path):
    path = emit_csv([], tmp_path / "e.csv", "ber", "a")
    with pytest.raises(OutputExistsError):
        emit_csv([], path, "ber", "b")
    assert parse_csv(path)[0] == "a"
    emit_csv([], path, "ber", "b", overwrite=True)
    assert parse_csv(path)[0] == "b"
    assert not list(tmp_path.glob("*.tmp"))


def test_ci_half_width_formula():
    p = BerPoint(0.0, 10, 1000, 100)
    assert p.ber == 0.1
    assert p.ci95 == pytest.approx(1.96 * np.sqrt(0.1 * 0.9 / 1000), rel=1e-4)
    assert BerPoint(0.0, 10, 1000, 0).ci95 == 0.0


def test_ci_coverage_on_bernoulli_draws():
    rng = np.random.default_rng(7)
    p, n, reps = 0.05, 4000, 1000
    hits = 0
    for k in rng.binomial(n, p, size=reps):
        pt = BerPoint(0.0, n, n, int(k))
        hits += abs(pt.ber - p) <= pt.ci95
    assert hits / reps >= 0.93


def test_round_sizes():
    assert round_sizes(10, 3) == [4, 3, 3]
    assert round_sizes(2, 200) == [1, 1]
    for t, r in [(100000, 200), (7, 7), (1001, 10)]:
        sizes = round_sizes(t, r)
        assert sum(sizes) == t and max(sizes) - min(sizes) <= 1


def test_config_hash_tracks_result_fields_only():
    base = ExperimentConfig()
    h = config_hash(base)
    assert h == config_hash(ExperimentConfig())
    for name, value in [("threads", 8), ("overwrite", True), ("out_dir", "elsewhere"),
                        ("checkpoint", "m.ckpt")]:
        assert config_hash(base.replace(**{name: value})) == h
    changes = {"nt": 3, "nr": 6, "modulation": "qam4", "layers": 9, "profile": "linear",
               "learnable_init": "linear", "keep_fraction": 0.75, "lam": 0.0,
               "reg_start_layer": 2, "psi_t": 0.25, "normalize_inputs": False,
               "iterations": 7, "batch": 9, "train_snr_min": 7.0, "train_snr_max": 15.0,
               "learning_rate": 5e-3, "lr_schedule": "constant", "lr_min": 1e-4, "seed": 1,
               "snr_grid": [8.0], "trials": 11, "monte_carlo_rounds": 3,
               "detectors": ["zf"], "truncate_layers": 4, "sdr_iterations": 5,
               "sdr_rounding_samples": 3}
    hashed = {f.name for f in dataclasses.fields(ExperimentConfig)} - {
        "threads", "overwrite", "out_dir", "checkpoint"}
    assert set(changes) == hashed
    seen = {h}
    for name, value in changes.items():
        hv = config_hash(base.replace(**{name: value}))
        assert hv not in seen, name
        seen.add(hv)


def test_yaml_loading(tmp_path):
    good = tmp_path / "c.yaml"
    good.write_text("nt: 2\nnr: 4\nsnr_grid: [6, 8]\ndetectors: [zf, MMSE]\n")
    cfg = ExperimentConfig.from_yaml(good)
    assert (cfg.nt, cfg.snr_grid, cfg.detectors) == (2, [6.0, 8.0], ["zf", "mmse"])
    bad = tmp_path / "u.yaml"
    bad.write_text("nt: 2\nnum_antennas: 4\n")
    with pytest.raises(ConfigError, match="num_antennas"):
        ExperimentConfig.from_yaml(bad)
    nested = tmp_path / "n.yaml"
    nested.write_text("train:\n  iterations: 3\n")
    with pytest.raises(ConfigError, match="nested"):
        ExperimentConfig.from_yaml(nested)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml(tmp_path / "missing.yaml")


@pytest.mark.parametrize("kw", [dict(snr_grid=[10.0, 8.0]), dict(trials=0), dict(threads=0),
                                dict(detectors=["zf", "oracle"]), dict(keep_fraction=0.0),
                                dict(truncate_layers=0), dict(snr_grid=[])])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        small(**kw)


def test_sweep_byte_identical_across_threads(tmp_path, trained):
    cfg, outcome = trained
    texts = []
    for threads in (1, 2, 8):
        c = cfg.replace(threads=threads, checkpoint=str(outcome.checkpoint_path))
        curves = run_ber_sweep(c)
        path = emit_csv(curves, tmp_path / f"t{threads}.csv", "ber", config_hash(c))
        texts.append(path.read_bytes())
    assert texts[0] == texts[1] == texts[2]
    h, _, curves = parse_csv(tmp_path / "t1.csv")
    assert h == config_hash(cfg)
    assert [c.detector for c in curves] == cfg.detectors


def test_noiseless_sweep_of_exact_detectors_is_error_free():
    cfg = small(snr_grid=[200.0], detectors=["zf", "mmse", "ml", "sdr"])
    for curve in run_ber_sweep(cfg):
        assert curve.points[0].error_count == 0, curve.detector


def test_missing_checkpoint_fails_before_compute(tmp_path):
    with pytest.raises(ConfigError, match="checkpoint"):
        run_ber_sweep(small(detectors=["wesnet"]))
    with pytest.raises(ConfigError, match="does not exist"):
        run_ber_sweep(small(detectors=["wesnet"], checkpoint=str(tmp_path / "none.ckpt")))


def test_reloaded_checkpoint_matches_in_memory(trained):
    cfg, outcome = trained
    c = cfg.replace(detectors=["wesnet"])
    mem = run_ber_sweep(c, checkpoint=outcome.checkpoint)
    disk = run_ber_sweep(c, checkpoint=load_checkpoint(outcome.checkpoint_path))
    assert [p.error_count for p in mem[0].points] == [p.error_count for p in disk[0].points]


def test_checkpoint_mismatch_and_truncation_bounds(trained):
    cfg, outcome = trained
    with pytest.raises(ConfigError, match="antenna"):
        run_ber_sweep(cfg.replace(nt=3, nr=4, detectors=["wesnet"]), outcome.checkpoint)
    with pytest.raises(ConfigError, match="truncate_layers"):
        run_ber_sweep(cfg.replace(truncate_layers=9, detectors=["wesnet"]), outcome.checkpoint)


def test_train_outputs(trained):
    cfg, outcome = trained
    text = outcome.loss_path.read_text().splitlines()
    assert text[0] == f"# config_hash: {config_hash(cfg)}"
    assert text[1].startswith("# wall_time_s: ")
    assert text[2] == "iteration,loss"
    assert len(text) == 3 + cfg.iterations
    assert float(text[-1].split(",")[1]) == outcome.losses[-1]
    ck = load_checkpoint(outcome.checkpoint_path)
    assert ck.config_hash == config_hash(cfg)
    assert ck.experiment["iterations"] == cfg.iterations
    with pytest.raises(OutputExistsError):
        run_train(cfg, outcome.checkpoint_path.parent)


def test_flops_csv_round_trip(tmp_path):
    cfg = ExperimentConfig()
    reports = run_flops(cfg)
    assert [r.detector for r in reports] == ["zf", "mmse", "ml", "sdr", "detnet", "wesnet"]
    path = emit_csv(reports, tmp_path / "f.csv", "flops", config_hash(cfg))
    assert path.read_text().splitlines()[1] == ",".join(FLOPS_COLUMNS)
    _, kind, rows = parse_csv(path)
    assert kind == "flops"
    for r, row in zip(reports, rows):
        assert row["analytic_flops"] == r.analytic_flops
        assert row["measured_macs"] == r.measured_macs
    wes = rows[-1]
    assert wes["keep_fraction"] == 0.5 and wes["layers"] == 12
