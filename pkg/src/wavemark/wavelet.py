"""Undecimated wavelet analysis of reflectance spectra.

Coefficients are direct inner products of the signal with a sampled mother
wavelet dilated to dyadic scales and translated to every offset (no
downsampling). Row s of the coefficient matrix holds dilation 2^(L-s+1), so
row 1 is the coarsest scale and row L the finest. Boundaries are handled by
half-point symmetric extension of the signal.

The Haar convention used throughout: +1 on the first half-support, -1 on the
second, support centered on the offset. A locally decreasing signal therefore
produces positive coefficients and an increasing one negative coefficients.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, ValidationError

WAVELETS = ("haar", "db4")
DEFAULT_LEVELS = 9


@dataclass
class CoeffMatrix:
    """L x N wavelet coefficient matrix; rows = scales (row 1 coarsest)."""

    values: np.ndarray
    wavelet: str
    scale_order: str = "coarse_to_fine"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValidationError(f"coefficient matrix must be 2-D, got shape {v.shape}")
        if not (1 <= v.shape[0] <= v.shape[1]):
            raise ValidationError(f"need 1 <= L <= N, got L={v.shape[0]}, N={v.shape[1]}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("non-finite coefficient values")
        if self.wavelet not in WAVELETS:
            raise ValidationError(f"unknown wavelet {self.wavelet!r}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def L(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]


def scale_dilation(L: int, s: int) -> int:
    """Dilation of scale row s (1-based) in an L-level analysis: 2^(L-s+1)."""
    if not 1 <= s <= L:
        raise ValidationError(f"scale index {s} outside 1..{L}")
    return 2 ** (L - s + 1)


def fold_index(idx: np.ndarray, n: int) -> np.ndarray:
    """Map arbitrary integer indices into 0..n-1 by half-point symmetric
    extension (...x2 x1 x0 | x0 x1 ... x_{n-1} | x_{n-1} x_{n-2}...)."""
    m = np.mod(idx, 2 * n)
    return np.where(m < n, m, 2 * n - 1 - m)


def _extend(signal: np.ndarray, left: int, right: int) -> np.ndarray:
    idx = np.arange(-left, signal.size + right)
    return signal[fold_index(idx, signal.size)]


def haar_kernel(dilation: int) -> tuple[np.ndarray, int]:
    """Sampled Haar wavelet at the given (even) dilation, unit l2 norm.

    Returns (samples, anchor) where samples[j] is the wavelet value at offset
    anchor + j relative to the translation point: +1/sqrt(l) on the first
    half-support, -1/sqrt(l) on the second, support centered on the offset.
    """
    if dilation < 2 or dilation % 2:
        raise ValidationError(f"haar dilation must be even and >= 2, got {dilation}")
    h = dilation // 2
    amp = 1.0 / np.sqrt(dilation)
    samples = np.concatenate([np.full(h, amp), np.full(h, -amp)])
    return samples, -h


_SQRT3 = np.sqrt(3.0)
_D4_SCALING = np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]) / (4.0 * np.sqrt(2.0))


@lru_cache(maxsize=1)
def _db4_table(refinements: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Daubechies 4-tap wavelet function sampled on a dyadic grid over [0, 3]
    via the cascade algorithm. Returns (grid, values)."""
    h = _D4_SCALING
    # exact scaling-function values at the integers seed the refinement
    phi = np.array([0.0, (1.0 + _SQRT3) / 2.0, (1.0 - _SQRT3) / 2.0, 0.0])
    spacing = 1
    for m in range(refinements):
        step = 2**m
        size = 3 * 2 * step + 1
        nxt = np.zeros(size)
        for k in range(4):
            idx = np.arange(size) - k * step
            ok = (idx >= 0) & (idx < phi.size)
            nxt[ok] += np.sqrt(2.0) * h[k] * phi[idx[ok]]
        phi = nxt
        spacing = 2 * step
    g = np.array([h[3], -h[2], h[1], -h[0]])
    size = phi.size
    psi = np.zeros(size)
    for k in range(4):
        idx = 2 * np.arange(size) - k * spacing
        ok = (idx >= 0) & (idx < size)
        psi[ok] += np.sqrt(2.0) * g[k] * phi[idx[ok]]
    grid = np.arange(size) / spacing
    return grid, psi


def db4_kernel(dilation: int) -> tuple[np.ndarray, int]:
    """Sampled 4-tap Daubechies wavelet dilated to scale `dilation`, centered,
    mean-removed and renormalized to unit l2 norm so the zero-mean and
    normalization invariants hold exactly in discrete form."""
    if dilation < 2:
        raise ValidationError(f"db4 dilation must be >= 2, got {dilation}")
    grid, psi = _db4_table()
    support = 3 * dilation
    t = (np.arange(support) + 0.5) / dilation
    samples = np.interp(t, grid, psi)
    samples = samples - samples.mean()
    norm = np.linalg.norm(samples)
    samples = samples / norm
    return samples, -(support // 2)


_KERNELS = {"haar": haar_kernel, "db4": db4_kernel}


def uwt(signal, L: int = DEFAULT_LEVELS, wavelet: str = "haar") -> CoeffMatrix:
    """Undecimated wavelet transform of a 1-D signal.

    Args:
        signal: finite 1-D array of length N.
        L: number of scales; row s uses dilation 2^(L-s+1).
        wavelet: "haar" or "db4" (db4 is qualitative-only downstream).

    Returns:
        CoeffMatrix with values[s-1, n] = <signal, wavelet dilated to
        2^(L-s+1) translated to offset n>, boundaries symmetric half-point.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValidationError(f"signal must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite signal values")
    if wavelet not in _KERNELS:
        raise ValidationError(f"unknown wavelet {wavelet!r}; expected one of {WAVELETS}")
    n = x.size
    if L < 1:
        raise ValidationError(f"L must be >= 1, got {L}")
    if 2**L > 2 * n:
        raise DimensionError(
            f"dilated support 2^{L} = {2**L} exceeds one symmetric-extension "
            f"period (2N = {2 * n}); reduce L or supply a longer signal"
        )
    rows = np.empty((L, n))
    for s in range(1, L + 1):
        kern, anchor = _KERNELS[wavelet](scale_dilation(L, s))
        ext = _extend(x, -anchor, anchor + kern.size)
        rows[s - 1] = np.correlate(ext, kern, mode="valid")[:n]
    return CoeffMatrix(rows, wavelet)


def coeff_tensor(spectra_values: np.ndarray, L: int = DEFAULT_LEVELS, wavelet: str = "haar") -> np.ndarray:
    """Stack uwt over an (M, N) matrix of signals into an (M, L, N) tensor."""
    vals = np.asarray(spectra_values, dtype=float)
    if vals.ndim != 2:
        raise ValidationError(f"expected (M, N) matrix, got shape {vals.shape}")
    return np.stack([uwt(row, L, wavelet).values for row in vals])


def save_coeffs_csv(coeffs: CoeffMatrix, path) -> None:
    """Write the L x N matrix as CSV, one row per scale, coarsest first."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in coeffs.values:
            writer.writerow(repr(float(v)) for v in row)


def load_coeffs_csv(path, wavelet: str = "haar") -> CoeffMatrix:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if row:
                rows.append([float(v) for v in row])
    return CoeffMatrix(np.array(rows), wavelet)
