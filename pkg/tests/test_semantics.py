"""Label summarization: mean vectors, band locations, power baseline."""

import json

import numpy as np
import pytest

from wavemark.errors import ValidationError
from wavemark.labeling import LabelArray
from wavemark.semantics import (
    COLOR_TAGS,
    absorption_bands,
    label_mean_vector,
    rivard_lcp,
    save_segments_csv,
    save_summary_json,
    summarize,
)
from wavemark.wavelet import CoeffMatrix


def _signed(labels):
    labels = np.asarray(labels, dtype=np.int16)
    return LabelArray(
        labels=labels,
        log_likelihoods=np.zeros(labels.shape[1]),
        signed=True,
        model_kind="gmm",
    )


def test_mean_vector_rounds_half_away_from_zero():
    cols = np.array(
        [
            [1] * 4 + [0] * 5,  # mean  0.444 -> 0
            [1] * 5 + [0] * 4,  # mean  0.556 -> 1
            [-1] * 4 + [0] * 5,  # mean -0.444 -> 0
            [-1] * 5 + [0] * 4,  # mean -0.556 -> -1
            [1, 1, 1, -1, -1, -1, 0, 0, 0],  # mean 0 -> 0
        ]
    )
    mv = label_mean_vector(_signed(cols.T))
    assert mv.tolist() == [0, 1, 0, -1, 0]
    half = _signed(np.array([[1, -1], [0, 0]]))  # means 0.5 and -0.5
    assert label_mean_vector(half).tolist() == [1, -1]


def test_mean_vector_rejects_multistate_labels():
    with pytest.raises(ValidationError):
        label_mean_vector(_signed(np.array([[1, 2], [0, 1]])))


def test_mean_vector_requires_signed_labels():
    arr = LabelArray(
        labels=np.array([[1, 2]], dtype=np.int16),
        log_likelihoods=np.zeros(2),
        signed=False,
        model_kind="gmm",
    )
    with pytest.raises(ValidationError):
        label_mean_vector(arr)


def test_band_at_flip_with_bridged_zeros():
    grid = np.arange(1.000, 1.0201, 0.005)  # 1.000 ... 1.020
    # decreasing run ends at 1.005, increasing starts at 1.020: the zeros in
    # between are bridged and the band sits at the midpoint 1.0125
    bands = absorption_bands([1, 1, 0, 0, -1], grid)
    assert bands.tolist() == pytest.approx([1.0125], abs=1e-12)


def test_band_at_direct_flip():
    grid = np.array([1.0, 1.1, 1.2, 1.3])
    bands = absorption_bands([1, 1, -1, -1], grid)
    assert bands.tolist() == pytest.approx([1.15], abs=1e-12)


def test_band_edge_cases():
    grid = np.linspace(1.0, 1.5, 6)
    assert absorption_bands([1, 1, 1, 1, 1, 1], grid).size == 0
    assert absorption_bands([0, 0, 0, 0, 0, 0], grid).size == 0
    # increasing-then-decreasing is a peak, not an absorption band
    assert absorption_bands([-1, -1, 1, 1, -1, -1], grid).tolist() == pytest.approx(
        [(1.3 + 1.4) / 2.0], abs=1e-12
    )
    # leading and trailing zeros do not fabricate runs
    assert absorption_bands([0, 1, 1, -1, -1, 0], grid).tolist() == pytest.approx(
        [(1.2 + 1.3) / 2.0], abs=1e-12
    )


def test_two_bands():
    grid = np.linspace(1.0, 1.7, 8)
    bands = absorption_bands([1, -1, -1, 1, 1, 0, -1, -1], grid)
    assert bands.tolist() == pytest.approx([1.05, (1.4 + 1.6) / 2.0], abs=1e-12)


def test_band_inputs_validated():
    grid = np.linspace(1.0, 1.3, 4)
    with pytest.raises(ValidationError):
        absorption_bands([1, 2, -1, -1], grid)
    with pytest.raises(ValidationError):
        absorption_bands([1, 1, -1], grid)


def test_rivard_lcp_default_and_custom_scales():
    values = np.arange(1.0, 6.0)[:, None] * np.ones((5, 6))  # row s = s
    coeffs = CoeffMatrix(values, "haar")
    # default: finest four scale rows 2..5 -> 2 + 3 + 4 + 5 = 14
    assert rivard_lcp(coeffs).tolist() == pytest.approx([14.0] * 6)
    assert rivard_lcp(coeffs, [1, 2]).tolist() == pytest.approx([3.0] * 6)
    shallow = CoeffMatrix(values[:2], "haar")
    # fewer than four rows: every scale participates
    assert rivard_lcp(shallow).tolist() == pytest.approx([3.0] * 6)
    with pytest.raises(ValidationError):
        rivard_lcp(coeffs, [0, 1])
    with pytest.raises(ValidationError):
        rivard_lcp(coeffs, [5, 6])


def test_summarize_round_trip(tmp_path):
    grid = np.arange(1.000, 1.0201, 0.005)
    arr = _signed(np.array([[1, 1, 0, 0, -1], [1, 1, 0, 0, -1]]))
    summary = summarize(arr, grid)
    assert summary.mean_vector.tolist() == [1, 1, 0, 0, -1]
    assert summary.band_locations.tolist() == pytest.approx([1.0125], abs=1e-12)
    assert summary.coloring == ("decreasing", "decreasing", "flat", "flat", "increasing")
    assert summary.zeros_bridged

    jpath = tmp_path / "summary.json"
    save_summary_json(summary, jpath)
    with open(jpath) as fh:
        loaded = json.load(fh)
    assert loaded["mean_vector"] == [1, 1, 0, 0, -1]
    assert loaded["band_locations"] == pytest.approx([1.0125])

    cpath = tmp_path / "segments.csv"
    save_segments_csv(summary, np.linspace(0.9, 0.5, 5), cpath)
    lines = cpath.read_text().strip().splitlines()
    assert lines[0] == "wavelength,reflectance,tag"
    assert len(lines) == 6
    assert lines[1].endswith("decreasing")
    assert lines[-1].endswith("increasing")


def test_summarize_grid_mismatch():
    arr = _signed(np.array([[1, -1]]))
    with pytest.raises(ValidationError):
        summarize(arr, np.linspace(1.0, 1.2, 3))


def test_color_tags_frozen():
    assert COLOR_TAGS == {1: "decreasing", 0: "flat", -1: "increasing"}
