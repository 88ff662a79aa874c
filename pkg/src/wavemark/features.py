"""Feature extraction: from a spectral library to classifier-ready vectors.

Each feature kind maps a library (and, for label features, a trained model)
to one flat vector per spectrum: raw reflectance, flattened wavelet
coefficients, flattened state labels with or without signs, or the
fine-scale power sum. Label matrices flatten scale-major, matching the
L x N layout.
"""

from __future__ import annotations

import json

import numpy as np

from .classify import FEATURE_KINDS, FeatureSet
from .errors import ParseError, ValidationError
from .labeling import label_tensor
from .mog import MogModel
from .mog import load_model as load_mog_model
from .nhmc import NhmcModel, TrainConfig, train_model
from .nhmc import load_model as load_gmm_model
from .semantics import rivard_lcp
from .wavelet import DEFAULT_LEVELS, uwt

MODEL_FEATURE_KINDS = ("gmm_labels", "gmm_sign", "mog_labels", "mog_sign")


def _name_tuple(class_names: dict[int, str]) -> tuple[str, ...]:
    """Class names ordered by id, or empty when ids are not 0..C-1."""
    if sorted(class_names) != list(range(len(class_names))):
        return ()
    return tuple(class_names[c] for c in range(len(class_names)))


def library_coeff_tensor(library, levels: int = DEFAULT_LEVELS, wavelet: str = "haar") -> np.ndarray:
    """(M, L, N) wavelet coefficients for every spectrum of a library."""
    return np.stack(
        [uwt(v, L=levels, wavelet=wavelet).values for v in library.values()]
    )


def train_on_library(
    library,
    k: int,
    levels: int = DEFAULT_LEVELS,
    wavelet: str = "haar",
    config: TrainConfig | None = None,
) -> NhmcModel:
    """Wavelet-analyze a library and train one chain per wavelength."""
    tensor = library_coeff_tensor(library, levels=levels, wavelet=wavelet)
    return train_model(tensor, k, config=config, wavelet=wavelet, grid=library.grid)


def _signed(labels: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    return np.where(tensor < 0, -labels, labels)


def build_features(
    library,
    kind: str,
    model=None,
    levels: int = DEFAULT_LEVELS,
    wavelet: str = "haar",
    lcp_scales=None,
) -> FeatureSet:
    """Feature vectors of the requested kind for every spectrum.

    Label kinds need a trained model of the matching family (gmm_* wants the
    k-state model, mog_* the collapsed one); the model's wavelet settings
    override the levels/wavelet arguments so features always match training.
    """
    if kind not in FEATURE_KINDS:
        raise ValidationError(f"unknown feature kind {kind!r}; expected one of {FEATURE_KINDS}")
    class_names = _name_tuple(library.class_names)
    ids = library.class_ids()
    if kind == "spectrum":
        vectors = library.values()
    elif kind == "coeffs":
        vectors = library_coeff_tensor(library, levels, wavelet).reshape(len(library), -1)
    elif kind == "rivard":
        tensor = library_coeff_tensor(library, levels, wavelet)
        vectors = np.stack([rivard_lcp(tensor[m], lcp_scales) for m in range(len(library))])
    else:
        if model is None:
            raise ValidationError(f"feature kind {kind!r} needs a trained model")
        wants_mog = kind.startswith("mog")
        if wants_mog and not isinstance(model, MogModel):
            raise ValidationError(f"feature kind {kind!r} needs a collapsed binary model")
        if not wants_mog and not isinstance(model, NhmcModel):
            raise ValidationError(f"feature kind {kind!r} needs a k-state model")
        if model.grid is not None and not np.array_equal(library.grid, model.grid):
            raise ValidationError("library grid does not match the model grid")
        tensor = library_coeff_tensor(library, model.L, model.wavelet)
        labels, _ = label_tensor(tensor, model)
        if kind.endswith("_sign"):
            labels = _signed(labels, tensor)
        vectors = labels.reshape(len(library), -1).astype(float)
    return FeatureSet(
        vectors=np.asarray(vectors, dtype=float),
        class_ids=ids,
        feature_kind=kind,
        class_names=class_names,
    )


def load_any_model(path):
    """Open a model file of either family by its model_kind tag."""
    try:
        with open(path, encoding="utf-8") as fh:
            kind = json.load(fh).get("model_kind")
    except OSError as exc:
        raise ParseError(f"cannot read model: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not a model file: {exc}") from exc
    if kind == "gmm":
        return load_gmm_model(path)
    if kind == "mog":
        return load_mog_model(path)
    raise ValidationError(f"{path}: unknown model_kind {kind!r}")


def save_features_csv(features: FeatureSet, sample_ids, path) -> None:
    """Write one row per spectrum: sample_id, class_id, class_name, then the
    feature values. A leading comment line records the feature kind."""
    if len(sample_ids) != len(features):
        raise ValidationError(
            f"{len(sample_ids)} sample ids for {len(features)} feature vectors"
        )
    names = features.class_names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# feature_kind={features.feature_kind}\n")
        cols = ",".join(f"f{j}" for j in range(features.dim))
        fh.write(f"sample_id,class_id,class_name,{cols}\n")
        for m, sid in enumerate(sample_ids):
            cid = int(features.class_ids[m])
            cname = names[cid] if names else str(cid)
            vals = ",".join(repr(float(v)) for v in features.vectors[m])
            fh.write(f"{sid},{cid},{cname},{vals}\n")


def load_features_csv(path) -> tuple[FeatureSet, list[str]]:
    """Read a feature CSV back into (FeatureSet, sample ids)."""
    kind = None
    header = None
    rows: list[list[float]] = []
    ids: list[int] = []
    sids: list[str] = []
    names: dict[int, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read features: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("feature_kind="):
                        kind = tok.split("=", 1)[1]
                continue
            if header is None:
                header = line.split(",")
                if header[:3] != ["sample_id", "class_id", "class_name"]:
                    raise ParseError(f"{path}: unexpected header {header[:3]}")
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: row has {len(parts)} fields, header has {len(header)}"
                )
            sids.append(parts[0])
            try:
                cid = int(parts[1])
                rows.append([float(v) for v in parts[3:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            ids.append(cid)
            names[cid] = parts[2]
    if kind is None or header is None or not rows:
        raise ParseError(f"{path}: missing feature_kind header or data rows")
    n_classes = max(names) + 1 if names else 0
    class_names = tuple(names.get(c, str(c)) for c in range(n_classes))
    fs = FeatureSet(
        vectors=np.array(rows, dtype=float),
        class_ids=np.array(ids, dtype=int),
        feature_kind=kind,
        class_names=class_names,
    )
    return fs, sids
