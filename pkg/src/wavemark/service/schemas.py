"""Request and response bodies for the pipeline service.

File arguments are names relative to the service workspace; only ingest's
source and a benchmark config's library path may point outside it. Requests
reject unknown fields so typos fail loudly instead of silently using a
default.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")


class IngestRequest(_Request):
    source: str
    out: str


class LibraryInfo(BaseModel):
    path: str
    n_spectra: int
    n_bands: int
    classes: dict[str, int]


class PreprocessRequest(_Request):
    library: str
    out: str
    wl_lo: float = 0.35
    wl_hi: float = 2.6
    step: float = 0.005


class PreprocessResponse(LibraryInfo):
    rejected: list[str]


class BalanceRequest(_Request):
    library: str
    out: str
    target_per_class: int
    seed: int = 0


class BalanceResponse(LibraryInfo):
    synthesized: int
    mixing_note: str


class BlurRequest(_Request):
    library: str
    out: str
    dmp: float
    seed: int = 0


class BlurResponse(LibraryInfo):
    dmp: float
    kernel: list[list[float]]


class SplitRequest(_Request):
    library: str
    train_out: str
    test_out: str
    train_per_class: int
    test_per_class: int
    seed: int = 0


class SplitResponse(BaseModel):
    train: LibraryInfo
    test: LibraryInfo


class SynthRequest(_Request):
    out: str
    n_classes: int = 5
    per_class: int = 8
    seed: int = 0
    wl_lo: float = 0.35
    wl_hi: float = 2.6
    step: float = 0.005


class TrainRequest(_Request):
    library: str
    out: str
    k: int
    levels: int = 9
    wavelet: str = "haar"
    max_iter: int = 200
    tol: float = 1e-6


class TrainResponse(BaseModel):
    path: str
    k: int
    L: int
    N: int
    final_log_likelihood: float
    warnings: list[str]


class CollapseRequest(_Request):
    model: str
    out: str


class CollapseResponse(BaseModel):
    path: str
    k: int
    L: int
    N: int
    warnings: list[str]


class LabelRequest(_Request):
    library: str
    model: str
    out_dir: str
    signed: bool = False


class LabelResponse(BaseModel):
    files: list[str]
    model_kind: str
    signed: bool
    total_log_likelihood: float


class ClassifyRequest(_Request):
    train_library: str
    test_library: str
    feature: str
    model: str | None = None
    classifier: str = "nn"
    metric: str = "l2"
    levels: int = 9
    wavelet: str = "haar"
    lcp_scales: list[int] | None = None
    svm_folds: int = 5
    svm_seed: int = 0


class ClassifyResponse(BaseModel):
    accuracy: float
    per_class: dict[str, float]
    confusion: list[list[int]]
    classes: list[str]
    predictions: dict[str, str]


class SemanticsRequest(_Request):
    library: str
    model: str
    out_dir: str


class SemanticsResponse(BaseModel):
    bands: dict[str, list[float]]
    files: list[str]


class BenchmarkRequest(_Request):
    out_dir: str
    config: dict | None = None
    config_path: str | None = None
    workers: int | None = None


class BenchmarkResponse(BaseModel):
    out_dir: str
    n_rows: int
    report: str
    config_sha256: str


class PlotDataRequest(_Request):
    report: str
    out_dir: str


class PlotDataResponse(BaseModel):
    files: list[str]


class HealthResponse(BaseModel):
    status: str
    version: str
    workspace: str
