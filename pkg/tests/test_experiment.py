import os

import numpy as np
import pytest

from rbreg.errors import ConfigError
from rbreg.experiment import (
    ExperimentConfig,
    SynthSpec,
    assemble_run_data,
    build_config,
    load_config,
    parse_config_text,
    run_experiment,
    search_lambda,
)

TINY = {
    "synth.classes": "6",
    "synth.dict_per_class": "4",
    "synth.train_per_class": "6",
    "synth.test_per_class": "4",
    "synth.d": "24",
    "synth.noise_sigma": "0.05",
    "train.epochs": "2",
    "train.batch_size": "8",
    "modes": "crc_light",
    "runs": "2",
}


def tiny_config(out_dir, **extra):
    values = dict(TINY)
    values["out"] = str(out_dir)
    values.update({k: str(v) for k, v in extra.items()})
    return build_config(values)


def test_parse_config_text():
    values = parse_config_text("# comment\ntrain.epochs = 5\n\nmodes=crc_light , csen\n")
    assert values == {"train.epochs": "5", "modes": "crc_light , csen"}
    with pytest.raises(ConfigError):
        parse_config_text("not a key value line")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        build_config({"nope.key": "1"})


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        build_config({"train.epochs": "many"})
    with pytest.raises(ConfigError):
        build_config({"modes": "warpdrive"})


def test_load_config_overrides(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("train.epochs = 5\nruns = 3\n")
    cfg = load_config(str(path), ["train.epochs=7"])
    assert cfg.train.epochs == 7
    assert cfg.runs == 3


def test_assemble_synth_run_data():
    cfg = ExperimentConfig(synth=SynthSpec(classes=5, dict_per_class=3,
                                           train_per_class=4, test_per_class=2, d=16),
                           runs=1, modes=("crc_light",))
    rd = assemble_run_data(cfg, 0)
    assert len(rd.dict_set) == 15
    assert len(rd.train_set) + len(rd.val_set) == 20
    assert len(rd.test_set) == 10
    assert rd.classes == 5
    rd2 = assemble_run_data(cfg, 0)
    assert np.array_equal(rd.train_set.features, rd2.train_set.features)
    rd3 = assemble_run_data(cfg, 1)
    assert not np.array_equal(rd.train_set.features, rd3.train_set.features)


def test_run_experiment_outputs(tmp_path):
    cfg = tiny_config(tmp_path / "out")
    rows, failures = run_experiment(cfg)
    assert failures == []
    assert len(rows) == 1
    mode, mean, std, count = rows[0]
    assert mode == "crc_light"
    assert count == 2
    out = tmp_path / "out"
    assert (out / "summary.csv").exists()
    for run in ("run_000", "run_001"):
        assert (out / run / "dictionary.rbd").exists()
        assert (out / run / "crc_light.report.csv").exists()
        assert (out / run / "crc_light.pairs.json").exists()
    header = (out / "summary.csv").read_text().splitlines()[0]
    assert header.startswith("method,ARD_mean,ARD_std,SRD_mean")


def test_run_experiment_network_artifacts(tmp_path):
    cfg = tiny_config(tmp_path / "out", modes="csen", runs=1)
    rows, failures = run_experiment(cfg)
    assert failures == []
    run_dir = tmp_path / "out" / "run_000"
    assert (run_dir / "csen.rbm").exists()
    history = (run_dir / "csen.history.csv").read_text().splitlines()
    assert history[0] == "epoch,train_loss,val_loss"
    assert len(history) == 1 + 2  # header + epochs


def test_run_experiment_deterministic(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    run_experiment(tiny_config(out_a, modes="csen", runs=1))
    run_experiment(tiny_config(out_b, modes="csen", runs=1))
    for rel in ("summary.csv", "run_000/csen.rbm", "run_000/csen.report.csv",
                "run_000/csen.pairs.json", "run_000/csen.history.csv",
                "run_000/dictionary.rbd"):
        assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel


def test_run_experiment_records_failures(tmp_path):
    # dictionary set too small for PCA target dimension -> RankDeficient
    cfg = tiny_config(tmp_path / "out", **{"dict.cr": "0.9"},
                      modes="crc_light", runs=1)
    cfg = build_config({**TINY, "out": str(tmp_path / "out"), "dict.cr": "0.9",
                        "synth.dict_per_class": "2", "runs": "1"})
    rows, failures = run_experiment(cfg)
    assert failures
    assert (tmp_path / "out" / "failures.txt").exists()


def test_search_lambda_convex_objective():
    best, trace = search_lambda(lambda lam: (np.log10(lam) + 5.0) ** 2)
    assert best == pytest.approx(1e-5)
    lams = [l for l, _ in trace]
    assert lams[:17] == [10.0 ** k for k in range(-13, 4)]
    assert lams[17:] == [best / 2 if best == 1e-5 else None, 2 * best] or len(lams) == 19


def test_search_lambda_single_candidate():
    best, trace = search_lambda(lambda lam: 1.0, coarse_grid=(0.25,))
    # all values equal: smallest candidate wins (0.125 from the fine step)
    assert best == pytest.approx(0.125)


def test_search_lambda_tie_prefers_smallest():
    best, _ = search_lambda(lambda lam: 0.0)
    assert best == pytest.approx(1e-13 / 2)


def test_crc_full_mode_runs(tmp_path):
    cfg = tiny_config(tmp_path / "out", modes="crc", runs=1)
    rows, failures = run_experiment(cfg)
    assert failures == []
    assert rows[0][0] == "crc"


def test_iterative_solver_mode_runs(tmp_path):
    cfg = tiny_config(tmp_path / "out", modes="omp", runs=1,
                      **{"solver.omp_k": "3", "synth.test_per_class": "2"})
    rows, failures = run_experiment(cfg)
    assert failures == []
    assert rows[0][0] == "omp"
