"""Seeded end-to-end benchmark sweep over (feature, classifier, DMP, k).

The pipeline per sweep point: build (or load) a library, preprocess, balance
classes by convex same-class mixing, blur at the requested dominant material
percentage, split train/test, train the chain models, extract features and
classify. Every stage is seeded, so a rerun with the same config produces a
byte-identical report CSV. Failures abort only their own sweep point and are
recorded in the report's status column.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict
from pydantic import ValidationError as PydanticValidationError

from . import __version__
from .classify import (
    NN_METRICS,
    FeatureSet,
    evaluate_accuracy,
    nn_classify_batch,
    svm_predict_batch,
    svm_train,
)
from .dataset import (
    balance_classes,
    blur_library,
    load_library,
    preprocess,
    split_train_test,
    synthetic_library,
)
from .errors import ConfigError, ParseError, WavemarkError
from .features import build_features, train_on_library
from .mog import collapse_model
from .mog import save_model as save_mog
from .nhmc import TrainConfig
from .nhmc import save_model as save_gmm

WORKERS_ENV = "WAVEMARK_WORKERS"
MIXING_NOTE = (
    "class balancing synthesizes spectra by convex linear mixing of 2-3 "
    "same-class parents with Dirichlet(1,...,1) weights"
)


class Seeds(BaseModel):
    model_config = ConfigDict(extra="forbid")
    library: int = 7
    balance: int = 11
    blur: int = 13
    split: int = 17
    svm: int = 0


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    n_classes: int = 5
    raw_per_class: int = 8
    target_per_class: int = 65
    train_per_class: int = 52
    test_per_class: int = 13
    wl_lo: float = 0.35
    wl_hi: float = 2.6
    step: float = 0.005


class WaveletConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    levels: int = 9
    kind: str = "haar"


class EmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    max_iter: int = 200
    tol: float = 1e-6


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dmps: list[float] = [0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00]
    gmm_states: list[int] = [2, 3, 4, 5, 6, 7, 8, 9, 10]
    mog_states: list[int] = [3, 4, 5, 6, 7, 8, 9, 10]


class SvmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    folds: int = 5
    C: list[float] | None = None
    gamma: list[float] | None = None


class BenchmarkConfig(BaseModel):
    """Schema of the benchmark config file (YAML or JSON).

    Unknown keys are rejected. Defaults reproduce the desk-scale protocol:
    5 synthetic classes balanced to 65 spectra each, split 52/13, DMP swept
    0.70 to 1.00 in steps of 0.05, state counts 2..10 (binary collapse from
    3..10), 9-level Haar analysis, nearest neighbor under l1/l2/cosine.
    """

    model_config = ConfigDict(extra="forbid")
    name: str = "benchmark"
    library: str | None = None
    seeds: Seeds = Seeds()
    data: DataConfig = DataConfig()
    wavelet: WaveletConfig = WaveletConfig()
    em: EmConfig = EmConfig()
    sweep: SweepConfig = SweepConfig()
    features: list[str] = [
        "spectrum",
        "coeffs",
        "rivard",
        "gmm_labels",
        "gmm_sign",
        "mog_labels",
        "mog_sign",
    ]
    nn_metrics: list[str] = ["l1", "l2", "cosine"]
    use_svm: bool = False
    svm: SvmConfig = SvmConfig()
    workers: int = 1


def load_config(path) -> BenchmarkConfig:
    """Parse and validate a YAML/JSON config file; unknown or ill-typed keys
    raise ConfigError naming the key."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping, got {type(raw).__name__}")
    return config_from_dict(raw, source=str(path))


def config_from_dict(raw: dict, source: str = "config") -> BenchmarkConfig:
    try:
        cfg = BenchmarkConfig(**raw)
    except PydanticValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{source}: invalid key {key!r}: {first['msg']}") from exc
    for m in cfg.nn_metrics:
        if m not in NN_METRICS:
            raise ConfigError(f"{source}: invalid key 'nn_metrics': unknown metric {m!r}")
    for f in cfg.features:
        if f not in (
            "spectrum", "coeffs", "rivard", "gmm_labels", "gmm_sign", "mog_labels", "mog_sign"
        ):
            raise ConfigError(f"{source}: invalid key 'features': unknown feature {f!r}")
    for d in cfg.sweep.dmps:
        if not 1.0 / 9.0 < d <= 1.0:
            raise ConfigError(f"{source}: invalid key 'sweep.dmps': {d} outside (1/9, 1]")
    return cfg


def config_hash(cfg: BenchmarkConfig) -> str:
    canon = json.dumps(cfg.model_dump(), sort_keys=True).encode()
    return hashlib.sha256(canon).hexdigest()


@dataclass
class BenchRow:
    feature: str
    classifier: str
    metric: str
    dmp: float
    k: int | None
    accuracy: float | None
    runtime: float
    status: str = "ok"

    def sort_key(self):
        return (self.feature, self.classifier, self.metric, self.dmp, self.k or 0)


@dataclass
class BenchmarkReport:
    rows: list[BenchRow]
    meta: dict


def _base_library(cfg: BenchmarkConfig):
    """Preprocessed, balanced library shared by every sweep point.

    Rebuilt identically in each worker from the seeds alone, so nothing
    large crosses process boundaries.
    """
    if cfg.library is not None:
        lib = load_library(cfg.library)
    else:
        lib = synthetic_library(
            n_classes=cfg.data.n_classes,
            per_class=cfg.data.raw_per_class,
            seed=cfg.seeds.library,
            wl_range=(cfg.data.wl_lo, cfg.data.wl_hi),
            step=cfg.data.step,
        )
    lib = preprocess(lib, wl_range=(cfg.data.wl_lo, cfg.data.wl_hi), step=cfg.data.step)
    return balance_classes(lib, cfg.data.target_per_class, seed=cfg.seeds.balance)


def _split_for_dmp(cfg: BenchmarkConfig, dmp: float):
    lib = _base_library(cfg)
    blurred = blur_library(lib, dmp, seed=cfg.seeds.blur)
    return split_train_test(
        blurred, cfg.data.train_per_class, cfg.data.test_per_class, seed=cfg.seeds.split
    )


def _classify_rows(cfg, kind, dmp, k, train_fs: FeatureSet, test_fs: FeatureSet, t0: float):
    rows = []
    truth = test_fs.class_ids
    for metric in cfg.nn_metrics:
        pred = nn_classify_batch(train_fs, test_fs.vectors, metric)
        acc = evaluate_accuracy(pred, truth).overall
        rows.append(BenchRow(kind, "nn", metric, dmp, k, acc, time.perf_counter() - t0))
    if cfg.use_svm:
        grid = {}
        if cfg.svm.C is not None:
            grid["C"] = cfg.svm.C
        if cfg.svm.gamma is not None:
            grid["gamma"] = cfg.svm.gamma
        model = svm_train(train_fs, grid=grid, folds=cfg.svm.folds, seed=cfg.seeds.svm)
        pred = svm_predict_batch(model, test_fs.vectors)
        acc = evaluate_accuracy(pred, truth).overall
        rows.append(BenchRow(kind, "svm", "-", dmp, k, acc, time.perf_counter() - t0))
    return rows


def _run_task(args: tuple[dict, str | None, float, int | None]) -> list[dict]:
    """One sweep point: (dmp, k) trains models, (dmp, None) covers the
    model-free features. Returns rows as dicts for cheap pickling.

    A failure in a shared stage (split, model training) errors every feature
    that depends on it; a failure inside one feature only errors that one.
    """
    raw_cfg, workdir, dmp, k = args
    cfg = BenchmarkConfig(**raw_cfg)
    t0 = time.perf_counter()
    rows: list[BenchRow] = []

    def error_rows(kinds, exc):
        status = f"error:{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
        out = []
        for kind in kinds:
            for m in cfg.nn_metrics:
                out.append(BenchRow(kind, "nn", m, dmp, k, None, time.perf_counter() - t0, status))
            if cfg.use_svm:
                out.append(BenchRow(kind, "svm", "-", dmp, k, None, time.perf_counter() - t0, status))
        return out

    def classify_kinds(kinds, train_lib, test_lib, model=None):
        levels, wv = cfg.wavelet.levels, cfg.wavelet.kind
        for kind in kinds:
            if kind not in cfg.features:
                continue
            try:
                tr = build_features(train_lib, kind, model=model, levels=levels, wavelet=wv)
                te = build_features(test_lib, kind, model=model, levels=levels, wavelet=wv)
                rows.extend(_classify_rows(cfg, kind, dmp, k, tr, te, t0))
            except WavemarkError as exc:
                rows.extend(error_rows([kind], exc))

    try:
        train_lib, test_lib = _split_for_dmp(cfg, dmp)
    except WavemarkError as exc:
        return [row.__dict__ for row in error_rows(_expected_kinds(cfg, k), exc)]

    if k is None:
        classify_kinds(("spectrum", "coeffs", "rivard"), train_lib, test_lib)
        return [row.__dict__ for row in rows]

    try:
        gmm = train_on_library(
            train_lib, k, levels=cfg.wavelet.levels, wavelet=cfg.wavelet.kind,
            config=TrainConfig(max_iter=cfg.em.max_iter, tol=cfg.em.tol),
        )
    except WavemarkError as exc:
        return [row.__dict__ for row in error_rows(_expected_kinds(cfg, k), exc)]
    if workdir is not None:
        mdir = Path(workdir) / "models" / f"dmp_{dmp:.2f}"
        mdir.mkdir(parents=True, exist_ok=True)
        save_gmm(gmm, mdir / f"gmm_k{k}.json")
    if k in cfg.sweep.gmm_states:
        classify_kinds(("gmm_labels", "gmm_sign"), train_lib, test_lib, model=gmm)
    mog_kinds = [f for f in ("mog_labels", "mog_sign") if f in cfg.features]
    if k in cfg.sweep.mog_states and mog_kinds:
        try:
            mog = collapse_model(gmm)
        except WavemarkError as exc:
            rows.extend(error_rows(mog_kinds, exc))
        else:
            if workdir is not None:
                save_mog(mog, Path(workdir) / "models" / f"dmp_{dmp:.2f}" / f"mog_k{k}.json")
            classify_kinds(("mog_labels", "mog_sign"), train_lib, test_lib, model=mog)
    return [row.__dict__ for row in rows]


def _expected_kinds(cfg: BenchmarkConfig, k: int | None) -> list[str]:
    if k is None:
        return [f for f in ("spectrum", "coeffs", "rivard") if f in cfg.features]
    kinds = []
    if k in cfg.sweep.gmm_states:
        kinds += [f for f in ("gmm_labels", "gmm_sign") if f in cfg.features]
    if k in cfg.sweep.mog_states:
        kinds += [f for f in ("mog_labels", "mog_sign") if f in cfg.features]
    return kinds


def _tasks(cfg: BenchmarkConfig):
    wants_model_free = any(f in cfg.features for f in ("spectrum", "coeffs", "rivard"))
    wants_gmm = any(f in cfg.features for f in ("gmm_labels", "gmm_sign"))
    wants_mog = any(f in cfg.features for f in ("mog_labels", "mog_sign"))
    ks = sorted(
        set(cfg.sweep.gmm_states if wants_gmm else [])
        | set(cfg.sweep.mog_states if wants_mog else [])
    )
    for dmp in cfg.sweep.dmps:
        if wants_model_free:
            yield dmp, None
        for k in ks:
            yield dmp, k


def run_benchmark(cfg: BenchmarkConfig, workdir, workers: int | None = None) -> BenchmarkReport:
    """Execute the sweep and write report.csv, best_k.csv, summary.txt,
    meta.json, per-point model files and plot-ready series under workdir."""
    out = Path(workdir)
    out.mkdir(parents=True, exist_ok=True)
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, cfg.workers))
    task_args = [(cfg.model_dump(), str(out), dmp, k) for dmp, k in _tasks(cfg)]
    started = time.perf_counter()
    if workers > 1 and len(task_args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, task_args))
    else:
        chunks = [_run_task(a) for a in task_args]
    rows = [BenchRow(**d) for chunk in chunks for d in chunk]
    rows.sort(key=BenchRow.sort_key)
    wall = time.perf_counter() - started

    meta = {
        "name": cfg.name,
        "version": __version__,
        "config": cfg.model_dump(),
        "config_sha256": config_hash(cfg),
        "mixing_note": MIXING_NOTE,
        "n_rows": len(rows),
    }
    write_report_csv(rows, out / "report.csv")
    write_best_k_csv(rows, out / "best_k.csv")
    export_plot_data(rows, out / "plot_data")
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    _write_summary(rows, meta, wall, workers, out / "summary.txt")
    return BenchmarkReport(rows=rows, meta=meta)


def write_report_csv(rows: list[BenchRow], path) -> None:
    """Deterministic machine-readable report; no wall-clock values, so a
    rerun with the same config is byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("feature,classifier,metric,dmp,k,accuracy,status\n")
        for r in rows:
            k = "" if r.k is None else str(r.k)
            acc = "" if r.accuracy is None else repr(r.accuracy)
            fh.write(f"{r.feature},{r.classifier},{r.metric},{r.dmp:.2f},{k},{acc},{r.status}\n")


def read_report_csv(path) -> list[BenchRow]:
    rows: list[BenchRow] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read report: {exc}") from exc
    with fh:
        header = fh.readline().strip().split(",")
        if header[:6] != ["feature", "classifier", "metric", "dmp", "k", "accuracy"]:
            raise ConfigError(f"{path}: not a benchmark report")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            f, c, m, dmp, k, acc, status = line.split(",", 6)
            rows.append(
                BenchRow(
                    feature=f,
                    classifier=c,
                    metric=m,
                    dmp=float(dmp),
                    k=int(k) if k else None,
                    accuracy=float(acc) if acc else None,
                    runtime=0.0,
                    status=status,
                )
            )
    return rows


def write_best_k_csv(rows: list[BenchRow], path) -> None:
    """Best accuracy over the k sweep per (feature, classifier, metric, dmp);
    model-free features pass through with an empty k."""
    best: dict[tuple, BenchRow] = {}
    for r in rows:
        if r.accuracy is None:
            continue
        key = (r.feature, r.classifier, r.metric, r.dmp)
        cur = best.get(key)
        if cur is None or r.accuracy > cur.accuracy or (
            r.accuracy == cur.accuracy and (r.k or 0) < (cur.k or 0)
        ):
            best[key] = r
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("feature,classifier,metric,dmp,best_k,accuracy\n")
        for key in sorted(best, key=lambda t: (t[0], t[1], t[2], t[3])):
            r = best[key]
            k = "" if r.k is None else str(r.k)
            fh.write(f"{r.feature},{r.classifier},{r.metric},{r.dmp:.2f},{k},{repr(r.accuracy)}\n")


def export_plot_data(rows: list[BenchRow], outdir) -> list[Path]:
    """One wide CSV per (classifier, metric): dmp column then the best-k
    accuracy series per feature, ready for external plotting."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    best: dict[tuple, float] = {}
    for r in rows:
        if r.accuracy is None:
            continue
        key = (r.classifier, r.metric, r.feature, r.dmp)
        if key not in best or r.accuracy > best[key]:
            best[key] = r.accuracy
    combos = sorted({(c, m) for c, m, _, _ in best})
    written = []
    for classifier, metric in combos:
        feats = sorted({f for c, m, f, _ in best if (c, m) == (classifier, metric)})
        dmps = sorted({d for c, m, _, d in best if (c, m) == (classifier, metric)})
        name = f"{classifier}_{metric.replace('-', 'none')}.csv"
        p = out / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write("dmp," + ",".join(feats) + "\n")
            for d in dmps:
                vals = [
                    repr(best[(classifier, metric, f, d)])
                    if (classifier, metric, f, d) in best
                    else ""
                    for f in feats
                ]
                fh.write(f"{d:.2f}," + ",".join(vals) + "\n")
        written.append(p)
    return written


def _write_summary(rows, meta, wall: float, workers: int, path) -> None:
    cols = ("feature", "classifier", "metric", "dmp", "k", "accuracy", "runtime")
    lines = [
        f"benchmark {meta['name']} (config {meta['config_sha256'][:12]})",
        f"rows: {len(rows)}   wall time: {wall:.1f}s   workers: {workers}",
        f"note: {MIXING_NOTE}",
        "",
        "  ".join(f"{c:>10}" for c in cols),
    ]
    for r in rows:
        acc = "-" if r.accuracy is None else f"{r.accuracy:.4f}"
        lines.append(
            "  ".join(
                [
                    f"{r.feature:>10}",
                    f"{r.classifier:>10}",
                    f"{r.metric:>10}",
                    f"{r.dmp:>10.2f}",
                    f"{(r.k if r.k is not None else '-'):>10}",
                    f"{acc:>10}",
                    f"{r.runtime:>9.1f}s",
                ]
            )
        )
    errors = [r for r in rows if r.status != "ok"]
    if errors:
        lines.append("")
        lines.append(f"{len(errors)} rows failed:")
        lines.extend(f"  {r.feature} dmp={r.dmp:.2f} k={r.k}: {r.status}" for r in errors)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
