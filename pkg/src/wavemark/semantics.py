"""Human-readable summaries of signed binary label arrays.

The per-wavelength mean of a signed binary label array says whether the
spectrum is locally decreasing (+1), increasing (-1) or flat (0) across
scales; midpoints between a decreasing run and the following increasing run
locate absorption features. A per-wavelength sum of fine-scale coefficients
serves as a baseline power feature.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .labeling import LabelArray
from .wavelet import CoeffMatrix

COLOR_TAGS = {1: "decreasing", 0: "flat", -1: "increasing"}


@dataclass
class SemanticSummary:
    """Mean vector, detected band locations and per-band slope tags for one
    spectrum. Zeros between paired runs are bridged during band detection;
    the flag records that choice for downstream consumers."""

    mean_vector: np.ndarray
    band_locations: np.ndarray
    coloring: tuple[str, ...]
    zeros_bridged: bool = True
    grid: np.ndarray | None = None

    def __post_init__(self):
        mv = np.asarray(self.mean_vector)
        bands = np.asarray(self.band_locations, dtype=float)
        if mv.ndim != 1:
            raise ValidationError(f"mean_vector must be 1-D, got shape {mv.shape}")
        if not np.all(np.isin(mv, (-1, 0, 1))):
            raise ValidationError("mean_vector entries must lie in {-1, 0, +1}")
        if len(self.coloring) != mv.size:
            raise ValidationError("coloring must tag every wavelength")
        if bands.size and np.any(np.diff(bands) <= 0):
            raise ValidationError("band locations must be strictly increasing")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float)
            if g.size != mv.size:
                raise ValidationError("grid length does not match mean_vector")
            if bands.size and (bands[0] < g[0] or bands[-1] > g[-1]):
                raise ValidationError("band locations fall outside the grid range")
            object.__setattr__(self, "grid", g)
        object.__setattr__(self, "mean_vector", mv.astype(int))
        object.__setattr__(self, "band_locations", bands)


def label_mean_vector(labels: LabelArray) -> np.ndarray:
    """Column means of a signed binary label array, rounded half away from
    zero to {-1, 0, +1}."""
    if not labels.signed:
        raise ValidationError("label array must be signed")
    lab = labels.labels
    if lab.size and not np.all(np.isin(lab, (-1, 0, 1))):
        raise ValidationError("signed binary labels must lie in {-1, 0, +1}")
    m = lab.mean(axis=0)
    return (np.sign(m) * np.floor(np.abs(m) + 0.5)).astype(int)


def absorption_bands(mean_vector, grid) -> np.ndarray:
    """Wavelength midpoints between each +1 run and the following -1 run.

    Zeros between the paired runs are bridged: the midpoint spans from the
    last +1 of the leading run to the first -1 of the trailing run. Runs in
    the other order produce nothing, and the result may be empty.
    """
    mv = np.asarray(mean_vector)
    g = np.asarray(grid, dtype=float)
    if mv.ndim != 1 or g.shape != mv.shape:
        raise ValidationError(
            f"mean_vector {mv.shape} and grid {g.shape} must be equal-length vectors"
        )
    if mv.size and not np.all(np.isin(mv, (-1, 0, 1))):
        raise ValidationError("mean_vector entries must lie in {-1, 0, +1}")
    nz = np.flatnonzero(mv)
    bands: list[float] = []
    run_sign = 0
    run_last = -1
    for idx in nz:
        v = int(mv[idx])
        if v == run_sign:
            run_last = idx
            continue
        if run_sign == 1 and v == -1:
            bands.append(0.5 * (g[run_last] + g[idx]))
        run_sign = v
        run_last = idx
    return np.array(bands)


def rivard_lcp(coeffs, lcp_scales=None) -> np.ndarray:
    """Per-wavelength sum of coefficients over the given 1-based scales.

    Defaults to the four finest scales (all scales when L < 4), the
    fine-detail end where narrow mineral features live.
    """
    W = coeffs.values if isinstance(coeffs, CoeffMatrix) else np.asarray(coeffs, dtype=float)
    if W.ndim != 2:
        raise ValidationError(f"coefficients must be (L, N), got shape {W.shape}")
    L = W.shape[0]
    if lcp_scales is None:
        scales = list(range(max(1, L - 3), L + 1))
    else:
        scales = sorted(set(int(s) for s in lcp_scales))
    if not scales:
        raise ValidationError("lcp_scales must not be empty")
    if scales[0] < 1 or scales[-1] > L:
        raise ValidationError(f"lcp_scales must lie in 1..{L}, got {scales}")
    return W[[s - 1 for s in scales], :].sum(axis=0)


def summarize(labels: LabelArray, grid) -> SemanticSummary:
    """Mean vector, absorption bands and slope tags for one labeled
    spectrum."""
    g = np.asarray(grid, dtype=float)
    mv = label_mean_vector(labels)
    if mv.size != g.size:
        raise ValidationError(f"labels cover {mv.size} wavelengths, grid has {g.size}")
    bands = absorption_bands(mv, g)
    coloring = tuple(COLOR_TAGS[int(v)] for v in mv)
    return SemanticSummary(
        mean_vector=mv, band_locations=bands, coloring=coloring, grid=g
    )


def save_summary_json(summary: SemanticSummary, path) -> None:
    doc = {
        "mean_vector": summary.mean_vector.tolist(),
        "band_locations": summary.band_locations.tolist(),
        "zeros_bridged": summary.zeros_bridged,
    }
    if summary.grid is not None:
        doc["grid"] = summary.grid.tolist()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def save_segments_csv(summary: SemanticSummary, reflectance, path) -> None:
    """Per-wavelength (wavelength, reflectance, tag) rows for external
    plotting of the colored-segment view."""
    if summary.grid is None:
        raise ValidationError("summary has no grid; cannot export segments")
    r = np.asarray(reflectance, dtype=float)
    if r.shape != summary.grid.shape:
        raise ValidationError(
            f"reflectance {r.shape} does not match the summary grid {summary.grid.shape}"
        )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("wavelength,reflectance,tag\n")
        for wl, refl, tag in zip(summary.grid, r, summary.coloring):
            fh.write(f"{wl:.6f},{refl!r},{tag}\n")
