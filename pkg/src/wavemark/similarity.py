"""Spectral similarity measures between reflectance vectors.

Four measures are provided: spectral angle (sam), Euclidean distance (ed),
Pearson correlation (scm), and symmetric relative entropy (sid). All operate
on equal-length 1-D vectors and are symmetric in their arguments.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ValidationError

SID_EPSILON = 1e-12

METRICS = ("sam", "ed", "scm", "sid")


def spectral_angle(x: np.ndarray, y: np.ndarray) -> float:
    """Angle in radians between two reflectance vectors, in [0, pi]."""
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise DomainError("spectral angle undefined for a zero vector")
    c = float(np.dot(x, y) / (nx * ny))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def euclidean_distance(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))


def spectral_correlation(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation between the two vectors, in [-1, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.linalg.norm(dx)
    sy = np.linalg.norm(dy)
    if sx == 0.0 or sy == 0.0:
        raise DomainError("spectral correlation undefined for a constant vector")
    return float(np.clip(np.dot(dx, dy) / (sx * sy), -1.0, 1.0))


def spectral_information_divergence(x: np.ndarray, y: np.ndarray) -> float:
    """Symmetric Kullback-Leibler divergence between normalized spectra.

    Each vector is shifted by a small epsilon, normalized to a probability
    vector p_k = r_k / sum(r), and the two relative entropies are summed.
    Natural logarithm.
    """
    p = _to_probability(x)
    q = _to_probability(y)
    return float(np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))


def _to_probability(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float) + SID_EPSILON
    if np.any(r <= 0.0):
        raise DomainError("sid requires positive entries after epsilon shift")
    return r / r.sum()


_DISPATCH = {
    "sam": spectral_angle,
    "ed": euclidean_distance,
    "scm": spectral_correlation,
    "sid": spectral_information_divergence,
}


def spectral_distance(r_i, r_j, metric: str) -> float:
    """Evaluate one of the four similarity measures.

    Args:
        r_i, r_j: equal-length 1-D reflectance vectors (length >= 2).
        metric: one of "sam", "ed", "scm", "sid".
    """
    if metric not in _DISPATCH:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {METRICS}")
    a = np.asarray(r_i, dtype=float)
    b = np.asarray(r_j, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValidationError(f"vectors must be 1-D and equal length, got {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValidationError("vectors must have length >= 2")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("non-finite entries in input vectors")
    return _DISPATCH[metric](a, b)
