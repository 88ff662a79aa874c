"""Benchmark sweep: config validation, determinism, artifacts, isolation."""

import json

import numpy as np
import pytest

from wavemark.benchmark import (
    BenchRow,
    MIXING_NOTE,
    config_from_dict,
    config_hash,
    export_plot_data,
    load_config,
    read_report_csv,
    run_benchmark,
    write_best_k_csv,
    write_report_csv,
)
from wavemark.errors import ConfigError, ParseError

TINY = {
    "name": "tiny",
    "data": {
        "n_classes": 2,
        "raw_per_class": 4,
        "target_per_class": 6,
        "train_per_class": 4,
        "test_per_class": 2,
        "wl_lo": 0.4,
        "wl_hi": 1.0,
        "step": 0.01,
    },
    "wavelet": {"levels": 5},
    "em": {"max_iter": 30},
    "sweep": {"dmps": [0.8, 1.0], "gmm_states": [2], "mog_states": [2]},
    "features": ["spectrum", "gmm_labels", "mog_sign"],
    "nn_metrics": ["l2"],
}


def test_defaults_mirror_the_protocol():
    cfg = config_from_dict({})
    assert cfg.data.n_classes == 5
    assert cfg.data.target_per_class == 65
    assert cfg.data.train_per_class == 52
    assert cfg.data.test_per_class == 13
    assert cfg.sweep.dmps == [0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00]
    assert cfg.sweep.gmm_states == list(range(2, 11))
    assert cfg.sweep.mog_states == list(range(3, 11))
    assert cfg.wavelet.levels == 9
    assert cfg.nn_metrics == ["l1", "l2", "cosine"]
    assert not cfg.use_svm


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError, match="kernel_width"):
        config_from_dict({"kernel_width": 3})
    with pytest.raises(ConfigError, match="dpms"):
        config_from_dict({"sweep": {"dpms": [1.0]}})


def test_bad_values_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"nn_metrics": ["l3"]})
    with pytest.raises(ConfigError):
        config_from_dict({"features": ["texture"]})
    with pytest.raises(ConfigError):
        config_from_dict({"sweep": {"dmps": [0.05]}})
    with pytest.raises(ConfigError):
        config_from_dict({"data": {"n_classes": "five and a half"}})


def test_load_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("features: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("just a string\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(scalar)
    good = tmp_path / "good.yaml"
    good.write_text("name: filetest\nsweep:\n  dmps: [0.9, 1.0]\n")
    cfg = load_config(good)
    assert cfg.name == "filetest"
    assert cfg.sweep.dmps == [0.9, 1.0]


def test_config_hash_tracks_content():
    a = config_from_dict({})
    b = config_from_dict({})
    c = config_from_dict({"name": "other"})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_tiny_run_rows_and_artifacts(tmp_path):
    cfg = config_from_dict(TINY)
    report = run_benchmark(cfg, tmp_path / "out", workers=1)
    # spectrum has no k axis; each model feature gets one row per (dmp, k)
    assert len(report.rows) == 2 + 2 + 2
    for row in report.rows:
        assert row.status == "ok"
        assert 0.0 <= row.accuracy <= 1.0
    keys = [(r.feature, r.metric, r.dmp, r.k) for r in report.rows]
    assert keys == sorted(keys, key=lambda t: (t[0], t[1], t[2], t[3] or 0))

    out = tmp_path / "out"
    assert (out / "report.csv").is_file()
    assert (out / "best_k.csv").is_file()
    assert (out / "summary.txt").is_file()
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config_sha256"] == config_hash(cfg)
    assert meta["n_rows"] == 6
    assert meta["mixing_note"] == MIXING_NOTE
    plot_files = sorted(p.name for p in (out / "plot_data").iterdir())
    assert plot_files == ["nn_l2.csv"]
    header = (out / "plot_data" / "nn_l2.csv").read_text().splitlines()[0]
    assert header.startswith("dmp,")
    assert "spectrum" in header and "gmm_labels" in header

    back = read_report_csv(out / "report.csv")
    assert [(r.feature, r.dmp, r.k, r.accuracy) for r in back] == [
        (r.feature, r.dmp, r.k, r.accuracy) for r in report.rows
    ]


def test_rerun_and_worker_count_are_byte_identical(tmp_path):
    cfg = config_from_dict(TINY)
    run_benchmark(cfg, tmp_path / "a", workers=1)
    run_benchmark(cfg, tmp_path / "b", workers=2)
    a = (tmp_path / "a" / "report.csv").read_bytes()
    b = (tmp_path / "b" / "report.csv").read_bytes()
    assert a == b


def test_task_errors_are_isolated(tmp_path):
    # 2^7 = 128 exceeds twice the band count (61), so every wavelet-based
    # feature fails while plain spectra still classify
    broken = dict(TINY)
    broken["wavelet"] = {"levels": 7}
    broken["features"] = ["spectrum", "coeffs", "gmm_labels"]
    cfg = config_from_dict(broken)
    report = run_benchmark(cfg, tmp_path / "out", workers=1)
    by_feature = {}
    for row in report.rows:
        by_feature.setdefault(row.feature, []).append(row.status)
    assert all(s == "ok" for s in by_feature["spectrum"])
    assert all(s.startswith("error:") for s in by_feature["coeffs"])
    assert all(s.startswith("error:") for s in by_feature["gmm_labels"])
    # the report file round-trips error rows too
    back = read_report_csv(tmp_path / "out" / "report.csv")
    assert any(r.status.startswith("error:") for r in back)
    assert all("," not in r.status for r in back)


def test_best_k_prefers_accuracy_then_smaller_k(tmp_path):
    rows = [
        BenchRow("gmm_labels", "nn", "l2", 1.0, 2, 0.90, 0.1),
        BenchRow("gmm_labels", "nn", "l2", 1.0, 3, 0.95, 0.1),
        BenchRow("gmm_labels", "nn", "l2", 1.0, 4, 0.95, 0.1),
        BenchRow("gmm_labels", "nn", "l2", 0.8, 2, 0.70, 0.1),
        BenchRow("gmm_labels", "nn", "l2", 0.8, 3, 0.65, 0.1),
    ]
    path = tmp_path / "best_k.csv"
    write_best_k_csv(rows, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "feature,classifier,metric,dmp,best_k,accuracy"
    data = {tuple(l.split(",")[:4]): l.split(",")[4:] for l in lines[1:]}
    assert data[("gmm_labels", "nn", "l2", "0.80")][0] == "2"
    # 0.95 appears for k=3 and k=4: the smaller k wins the tie
    assert data[("gmm_labels", "nn", "l2", "1.00")][0] == "3"


def test_report_csv_round_trip_exact(tmp_path):
    rows = [
        BenchRow("spectrum", "nn", "cosine", 0.75, None, 1.0 / 3.0, 0.5),
        BenchRow("mog_sign", "svm", "-", 1.0, 5, 0.9846153846153847, 1.5),
    ]
    path = tmp_path / "report.csv"
    write_report_csv(rows, path)
    back = read_report_csv(path)
    assert back[0].k is None
    assert back[0].accuracy == rows[0].accuracy
    assert back[1].k == 5
    assert back[1].accuracy == rows[1].accuracy
    with pytest.raises(ParseError):
        read_report_csv(tmp_path / "absent.csv")


def test_export_plot_data_names(tmp_path):
    rows = [
        BenchRow("spectrum", "nn", "l1", 1.0, None, 0.5, 0.1),
        BenchRow("spectrum", "svm", "-", 1.0, None, 0.6, 0.1),
    ]
    paths = export_plot_data(rows, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["nn_l1.csv", "svm_none.csv"]
