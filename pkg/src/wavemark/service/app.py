"""FastAPI application exposing the pipeline over a workspace directory.

Every endpoint reads and writes files by workspace-relative name, so the
service stays stateless between calls and artifacts remain inspectable on
disk. Library errors map to HTTP 422 with a "kind" field separating config
mistakes from runtime failures; clients use it to pick an exit code.
"""

from __future__ import annotations

import re
import warnings
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..benchmark import (
    MIXING_NOTE,
    config_from_dict,
    export_plot_data,
    load_config,
    read_report_csv,
    run_benchmark,
)
from ..classify import evaluate_accuracy, nn_classify_batch, svm_predict_batch, svm_train
from ..dataset import (
    SpectralLibrary,
    balance_classes,
    blur_library,
    dmp_to_kernel,
    load_library,
    preprocess,
    save_library,
    split_train_test,
    synthetic_library,
)
from ..errors import ConfigError, ValidationError, WavemarkError
from ..features import build_features, library_coeff_tensor, load_any_model, train_on_library
from ..labeling import LabelArray, label_tensor, save_labels_csv
from ..mog import MogModel, collapse_model
from ..mog import save_model as save_mog
from ..nhmc import TrainConfig
from ..nhmc import save_model as save_gmm
from ..semantics import save_segments_csv, save_summary_json, summarize
from . import schemas as S


def _resolve(base: Path, name: str, for_write: bool = False) -> Path:
    p = Path(name)
    if p.is_absolute():
        raise ValidationError(f"path {name!r} must be relative to the workspace")
    full = (base / p).resolve()
    root = base.resolve()
    if full != root and root not in full.parents:
        raise ValidationError(f"path {name!r} escapes the workspace")
    if for_write:
        full.parent.mkdir(parents=True, exist_ok=True)
    return full


def _rel(base: Path, full: Path) -> str:
    return str(full.resolve().relative_to(base.resolve()))


def _info(base: Path, path: Path, lib: SpectralLibrary) -> S.LibraryInfo:
    counts: dict[str, int] = {}
    for sp in lib.spectra:
        name = lib.class_names[sp.class_id]
        counts[name] = counts.get(name, 0) + 1
    return S.LibraryInfo(
        path=_rel(base, path), n_spectra=len(lib), n_bands=lib.n_bands, classes=counts
    )


def _safe_filename(sample_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", sample_id)


def create_app(workspace) -> FastAPI:
    """Build the service over one workspace directory (created if absent)."""
    base = Path(workspace)
    base.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="wavemark", version=__version__)
    app.state.workspace = base

    @app.exception_handler(WavemarkError)
    async def _wavemark_error(request: Request, exc: WavemarkError):
        kind = "config" if isinstance(exc, ConfigError) else "runtime"
        return JSONResponse(
            status_code=422,
            content={"detail": str(exc), "kind": kind, "error_type": type(exc).__name__},
        )

    @app.get("/health", response_model=S.HealthResponse)
    def health():
        return S.HealthResponse(status="ok", version=__version__, workspace=str(base))

    @app.post("/ingest", response_model=S.LibraryInfo)
    def ingest(req: S.IngestRequest):
        lib = load_library(req.source)
        out = _resolve(base, req.out, for_write=True)
        save_library(lib, out)
        return _info(base, out, lib)

    @app.post("/synth", response_model=S.LibraryInfo)
    def synth(req: S.SynthRequest):
        lib = synthetic_library(
            n_classes=req.n_classes,
            per_class=req.per_class,
            seed=req.seed,
            wl_range=(req.wl_lo, req.wl_hi),
            step=req.step,
        )
        out = _resolve(base, req.out, for_write=True)
        save_library(lib, out)
        return _info(base, out, lib)

    @app.post("/preprocess", response_model=S.PreprocessResponse)
    def do_preprocess(req: S.PreprocessRequest):
        lib = load_library(_resolve(base, req.library))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = preprocess(lib, wl_range=(req.wl_lo, req.wl_hi), step=req.step)
        kept = {sp.sample_id for sp in result.spectra}
        rejected = [sp.sample_id for sp in lib.spectra if sp.sample_id not in kept]
        out = _resolve(base, req.out, for_write=True)
        save_library(result, out)
        info = _info(base, out, result)
        return S.PreprocessResponse(**info.model_dump(), rejected=rejected)

    @app.post("/balance", response_model=S.BalanceResponse)
    def balance(req: S.BalanceRequest):
        lib = load_library(_resolve(base, req.library))
        result = balance_classes(lib, req.target_per_class, seed=req.seed)
        out = _resolve(base, req.out, for_write=True)
        save_library(result, out)
        info = _info(base, out, result)
        return S.BalanceResponse(
            **info.model_dump(),
            synthesized=len(result) - len(lib),
            mixing_note=MIXING_NOTE,
        )

    @app.post("/blur", response_model=S.BlurResponse)
    def blur(req: S.BlurRequest):
        lib = load_library(_resolve(base, req.library))
        kernel = dmp_to_kernel(req.dmp)
        result = blur_library(lib, req.dmp, seed=req.seed)
        out = _resolve(base, req.out, for_write=True)
        save_library(result, out)
        info = _info(base, out, result)
        return S.BlurResponse(
            **info.model_dump(), dmp=req.dmp, kernel=kernel.weights.tolist()
        )

    @app.post("/split", response_model=S.SplitResponse)
    def split(req: S.SplitRequest):
        lib = load_library(_resolve(base, req.library))
        train_lib, test_lib = split_train_test(
            lib, req.train_per_class, req.test_per_class, seed=req.seed
        )
        train_out = _resolve(base, req.train_out, for_write=True)
        test_out = _resolve(base, req.test_out, for_write=True)
        save_library(train_lib, train_out)
        save_library(test_lib, test_out)
        return S.SplitResponse(
            train=_info(base, train_out, train_lib), test=_info(base, test_out, test_lib)
        )

    @app.post("/train", response_model=S.TrainResponse)
    def train(req: S.TrainRequest):
        lib = load_library(_resolve(base, req.library))
        model = train_on_library(
            lib,
            req.k,
            levels=req.levels,
            wavelet=req.wavelet,
            config=TrainConfig(max_iter=req.max_iter, tol=req.tol),
        )
        out = _resolve(base, req.out, for_write=True)
        save_gmm(model, out)
        return S.TrainResponse(
            path=_rel(base, out),
            k=model.k,
            L=model.L,
            N=model.N,
            final_log_likelihood=model.metadata["final_log_likelihood"],
            warnings=model.metadata["warnings"],
        )

    @app.post("/collapse", response_model=S.CollapseResponse)
    def collapse(req: S.CollapseRequest):
        model = load_any_model(_resolve(base, req.model))
        if isinstance(model, MogModel):
            raise ValidationError("model is already collapsed")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mog = collapse_model(model)
        out = _resolve(base, req.out, for_write=True)
        save_mog(mog, out)
        return S.CollapseResponse(
            path=_rel(base, out),
            k=mog.k,
            L=mog.L,
            N=mog.N,
            warnings=mog.metadata.get("collapse_warnings", []),
        )

    def _labeled_arrays(lib: SpectralLibrary, model, signed: bool) -> list[LabelArray]:
        if model.grid is not None and not np.array_equal(lib.grid, model.grid):
            raise ValidationError("library grid does not match the model grid")
        tensor = library_coeff_tensor(lib, model.L, model.wavelet)
        labels, lls = label_tensor(tensor, model)
        if signed:
            labels = np.where(tensor < 0, -labels, labels)
        kind = "mog" if isinstance(model, MogModel) else "gmm"
        return [
            LabelArray(labels=labels[m], log_likelihoods=lls[m], signed=signed, model_kind=kind)
            for m in range(len(lib))
        ]

    @app.post("/label", response_model=S.LabelResponse)
    def label(req: S.LabelRequest):
        lib = load_library(_resolve(base, req.library))
        model = load_any_model(_resolve(base, req.model))
        arrays = _labeled_arrays(lib, model, req.signed)
        out_dir = _resolve(base, req.out_dir, for_write=True)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for sp, arr in zip(lib.spectra, arrays):
            p = out_dir / f"{_safe_filename(sp.sample_id)}.csv"
            save_labels_csv(arr, p)
            files.append(_rel(base, p))
        total_ll = float(sum(arr.log_likelihoods.sum() for arr in arrays))
        return S.LabelResponse(
            files=files,
            model_kind=arrays[0].model_kind,
            signed=req.signed,
            total_log_likelihood=total_ll,
        )

    @app.post("/classify", response_model=S.ClassifyResponse)
    def classify(req: S.ClassifyRequest):
        train_lib = load_library(_resolve(base, req.train_library))
        test_lib = load_library(_resolve(base, req.test_library))
        model = None
        if req.model is not None:
            model = load_any_model(_resolve(base, req.model))
        train_fs = build_features(
            train_lib, req.feature, model=model, levels=req.levels,
            wavelet=req.wavelet, lcp_scales=req.lcp_scales,
        )
        test_fs = build_features(
            test_lib, req.feature, model=model, levels=req.levels,
            wavelet=req.wavelet, lcp_scales=req.lcp_scales,
        )
        if req.classifier == "nn":
            pred = nn_classify_batch(train_fs, test_fs.vectors, req.metric)
        elif req.classifier == "svm":
            svm = svm_train(train_fs, folds=req.svm_folds, seed=req.svm_seed)
            pred = svm_predict_batch(svm, test_fs.vectors)
        else:
            raise ValidationError(f"unknown classifier {req.classifier!r}; expected nn or svm")
        ev = evaluate_accuracy(pred, test_fs.class_ids)
        names = train_lib.class_names

        def name_of(cid: int) -> str:
            return names.get(cid, str(cid))

        return S.ClassifyResponse(
            accuracy=ev.overall,
            per_class={name_of(c): a for c, a in ev.per_class.items()},
            confusion=ev.confusion.tolist(),
            classes=[name_of(int(c)) for c in ev.classes],
            predictions={
                sp.sample_id: name_of(int(p)) for sp, p in zip(test_lib.spectra, pred)
            },
        )

    @app.post("/semantics", response_model=S.SemanticsResponse)
    def semantics(req: S.SemanticsRequest):
        lib = load_library(_resolve(base, req.library))
        model = load_any_model(_resolve(base, req.model))
        if not isinstance(model, MogModel):
            raise ValidationError("semantic summaries need the collapsed binary model")
        arrays = _labeled_arrays(lib, model, signed=True)
        out_dir = _resolve(base, req.out_dir, for_write=True)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        bands: dict[str, list[float]] = {}
        for sp, arr in zip(lib.spectra, arrays):
            summary = summarize(arr, lib.grid)
            stem = _safe_filename(sp.sample_id)
            jp = out_dir / f"{stem}.json"
            cp = out_dir / f"{stem}_segments.csv"
            save_summary_json(summary, jp)
            save_segments_csv(summary, sp.reflectance, cp)
            files += [_rel(base, jp), _rel(base, cp)]
            bands[sp.sample_id] = summary.band_locations.tolist()
        return S.SemanticsResponse(bands=bands, files=files)

    @app.post("/benchmark", response_model=S.BenchmarkResponse)
    def benchmark(req: S.BenchmarkRequest):
        if (req.config is None) == (req.config_path is None):
            raise ConfigError("provide exactly one of config or config_path")
        if req.config_path is not None:
            p = Path(req.config_path)
            cfg = load_config(p if p.is_absolute() else _resolve(base, req.config_path))
        else:
            cfg = config_from_dict(req.config)
        out_dir = _resolve(base, req.out_dir, for_write=True)
        report = run_benchmark(cfg, out_dir, workers=req.workers)
        return S.BenchmarkResponse(
            out_dir=_rel(base, out_dir),
            n_rows=len(report.rows),
            report=_rel(base, out_dir / "report.csv"),
            config_sha256=report.meta["config_sha256"],
        )

    @app.post("/export-plot-data", response_model=S.PlotDataResponse)
    def plot_data(req: S.PlotDataRequest):
        rows = read_report_csv(_resolve(base, req.report))
        out_dir = _resolve(base, req.out_dir, for_write=True)
        written = export_plot_data(rows, out_dir)
        return S.PlotDataResponse(files=[_rel(base, p) for p in written])

    return app
