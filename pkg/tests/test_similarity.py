"""Similarity measures: hand-derived values first, then the metric axioms."""

import math

import numpy as np
import pytest

from wavemark.errors import DomainError, ValidationError
from wavemark.similarity import (
    METRICS,
    euclidean_distance,
    spectral_angle,
    spectral_correlation,
    spectral_distance,
    spectral_information_divergence,
)

# Hand derivation for r_i = [1, 3], r_j = [2, 2] (epsilon shift is negligible
# at 1e-12): p = (1/4, 3/4), q = (1/2, 1/2),
#   D(p||q) = 1/4 ln(1/2) + 3/4 ln(3/2) = 0.13081203594113694
#   D(q||p) = 1/2 ln(2)   + 1/2 ln(2/3) = 0.14384103622589045
#   sid     = D(p||q) + D(q||p)         = 0.27465307216702745
SID_TWO_BAND = 0.27465307216702745


def test_sid_two_band_value():
    got = spectral_information_divergence(np.array([1.0, 3.0]), np.array([2.0, 2.0]))
    assert got == pytest.approx(SID_TWO_BAND, abs=1e-9)
    # same derivation written independently with math.log
    p = np.array([0.25, 0.75])
    q = np.array([0.5, 0.5])
    direct = sum(p[i] * math.log(p[i] / q[i]) for i in range(2)) + sum(
        q[i] * math.log(q[i] / p[i]) for i in range(2)
    )
    assert got == pytest.approx(direct, abs=1e-9)


def test_angle_known_geometry():
    x = np.array([1.0, 0.0])
    assert spectral_angle(x, np.array([0.0, 1.0])) == pytest.approx(math.pi / 2, abs=1e-12)
    assert spectral_angle(x, np.array([1.0, 1.0])) == pytest.approx(math.pi / 4, abs=1e-12)
    assert spectral_angle(x, 3.0 * x) == pytest.approx(0.0, abs=1e-12)
    assert spectral_angle(x, -x) == pytest.approx(math.pi, abs=1e-12)


def test_euclidean_three_four_five():
    assert euclidean_distance(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_correlation_extremes():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert spectral_correlation(x, 2.0 * x + 7.0) == pytest.approx(1.0, abs=1e-12)
    assert spectral_correlation(x, -x) == pytest.approx(-1.0, abs=1e-12)
    orth = np.array([1.0, -1.0, -1.0, 1.0])  # zero mean, orthogonal to centered ramp
    assert spectral_correlation(x, orth) == pytest.approx(0.0, abs=1e-12)


def test_symmetry_all_metrics():
    rng = np.random.default_rng(42)
    for _ in range(50):
        x = rng.uniform(0.05, 1.0, size=16)
        y = rng.uniform(0.05, 1.0, size=16)
        for metric in METRICS:
            assert spectral_distance(x, y, metric) == pytest.approx(
                spectral_distance(y, x, metric), abs=1e-12
            )


def test_scale_invariance_sam_scm_sid():
    rng = np.random.default_rng(7)
    for _ in range(25):
        x = rng.uniform(0.05, 1.0, size=32)
        y = rng.uniform(0.05, 1.0, size=32)
        a, b = rng.uniform(0.5, 3.0, size=2)
        assert spectral_angle(a * x, b * y) == pytest.approx(spectral_angle(x, y), abs=1e-9)
        assert spectral_correlation(a * x, b * y + 0.0) == pytest.approx(
            spectral_correlation(x, y), abs=1e-9
        )
        # sid normalizes to probabilities, so common scaling is a no-op up to
        # the epsilon shift
        assert spectral_information_divergence(a * x, a * y) == pytest.approx(
            spectral_information_divergence(x, y), abs=1e-6
        )


def test_nonnegativity_and_self_distance():
    rng = np.random.default_rng(3)
    for _ in range(25):
        x = rng.uniform(0.05, 1.0, size=20)
        y = rng.uniform(0.05, 1.0, size=20)
        for metric in ("sam", "ed", "sid"):
            assert spectral_distance(x, y, metric) >= 0.0
            # arccos near 1 loses half the float precision, hence 1e-7 for sam
            tol = 1e-7 if metric == "sam" else 1e-9
            assert spectral_distance(x, x, metric) == pytest.approx(0.0, abs=tol)


def test_domain_errors():
    zero = np.zeros(4)
    with pytest.raises(DomainError):
        spectral_angle(zero, np.ones(4))
    with pytest.raises(DomainError):
        spectral_correlation(np.full(4, 2.0), np.ones(4))
    with pytest.raises(DomainError):
        spectral_information_divergence(np.array([1.0, -1.0]), np.ones(2))


def test_validation_errors():
    with pytest.raises(ValidationError):
        spectral_distance([1.0, 2.0], [1.0, 2.0, 3.0], "ed")
    with pytest.raises(ValidationError):
        spectral_distance([1.0, 2.0], [1.0, 2.0], "chebyshev")
    with pytest.raises(ValidationError):
        spectral_distance([1.0], [1.0], "ed")
    with pytest.raises(ValidationError):
        spectral_distance([1.0, np.nan], [1.0, 2.0], "ed")
