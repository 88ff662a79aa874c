"""Spectral libraries: loading, preprocessing, class balancing, spatial blur.

A library is a list of labeled reflectance spectra sharing one wavelength
grid. The operations here reproduce a benchmark protocol: resample to a
uniform grid and normalize by the maximum, balance class sizes by convex
mixing, blur spectra placed on a 2-D grid with a 3x3 Gaussian kernel whose
center weight (the "dominant material percentage", DMP) is prescribed, and
split into train/test sets. Everything is deterministic given its seed.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError, ValidationError

GRID_DECIMALS = 6  # wavelength precision used everywhere, matches the CSV header


def make_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Uniform wavelength grid from lo to hi (inclusive), canonicalized.

    Values are rounded to 6 decimal places so that a grid written to CSV and
    parsed back is bitwise identical.
    """
    if step <= 0:
        raise ValidationError("grid step must be > 0")
    if hi <= lo:
        raise ValidationError("grid range must satisfy hi > lo")
    n = int(round((hi - lo) / step)) + 1
    grid = np.round(np.linspace(lo, hi, n), GRID_DECIMALS)
    grid.flags.writeable = False
    return grid


@dataclass
class Spectrum:
    """One labeled reflectance curve.

    wavelengths are band centers in micrometers, strictly increasing;
    reflectance is nonnegative and finite, one value per band.
    """

    wavelengths: np.ndarray
    reflectance: np.ndarray
    class_id: int
    sample_id: str

    def __post_init__(self):
        w = np.asarray(self.wavelengths, dtype=float)
        r = np.asarray(self.reflectance, dtype=float)
        if w.ndim != 1 or r.ndim != 1 or w.shape != r.shape:
            raise ValidationError(
                f"spectrum {self.sample_id!r}: wavelengths and reflectance must be "
                f"1-D and equal length, got {w.shape} vs {r.shape}"
            )
        if w.size < 2:
            raise ValidationError(f"spectrum {self.sample_id!r}: needs at least 2 bands")
        if not np.all(np.diff(w) > 0):
            raise ValidationError(f"spectrum {self.sample_id!r}: wavelengths not strictly increasing")
        if not np.all(np.isfinite(r)):
            raise ValidationError(f"spectrum {self.sample_id!r}: non-finite reflectance")
        if np.any(r < 0):
            raise ValidationError(f"spectrum {self.sample_id!r}: negative reflectance")
        w.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "wavelengths", w)
        object.__setattr__(self, "reflectance", r)


@dataclass
class SpectralLibrary:
    """A set of spectra on one shared wavelength grid."""

    spectra: list[Spectrum]
    grid: np.ndarray
    class_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        if not self.spectra:
            raise ValidationError("library has no spectra")
        seen_ids = set()
        present: set[int] = set()
        for sp in self.spectra:
            if not np.array_equal(sp.wavelengths, grid):
                raise ValidationError(f"spectrum {sp.sample_id!r} is not on the library grid")
            if sp.sample_id in seen_ids:
                raise ValidationError(f"duplicate sample_id {sp.sample_id!r}")
            seen_ids.add(sp.sample_id)
            present.add(sp.class_id)
        if not self.class_names:
            object.__setattr__(
                self, "class_names", {cid: f"class{cid}" for cid in sorted(present)}
            )
        unknown = present - set(self.class_names)
        if unknown:
            raise ValidationError(f"spectra reference undeclared classes {sorted(unknown)}")
        missing = set(self.class_names) - present
        if missing:
            raise ValidationError(f"declared classes with no spectra: {sorted(missing)}")

    def __len__(self) -> int:
        return len(self.spectra)

    @property
    def n_bands(self) -> int:
        return self.grid.size

    def class_ids(self) -> np.ndarray:
        return np.array([sp.class_id for sp in self.spectra], dtype=int)

    def values(self) -> np.ndarray:
        """All reflectance rows stacked into an (M, N) matrix."""
        return np.stack([sp.reflectance for sp in self.spectra])

    def by_class(self) -> dict[int, list[Spectrum]]:
        out: dict[int, list[Spectrum]] = {cid: [] for cid in sorted(self.class_names)}
        for sp in self.spectra:
            out[sp.class_id].append(sp)
        return out


def libraries_equal(a: SpectralLibrary, b: SpectralLibrary) -> bool:
    """Bitwise equality of grids, sample order, labels, and values."""
    if not np.array_equal(a.grid, b.grid) or len(a) != len(b):
        return False
    if a.class_names != b.class_names:
        return False
    for sa, sb in zip(a.spectra, b.spectra):
        if sa.sample_id != sb.sample_id or sa.class_id != sb.class_id:
            return False
        if not np.array_equal(sa.reflectance, sb.reflectance):
            return False
    return True


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def save_library(lib: SpectralLibrary, path) -> None:
    """Write a library to CSV: header `sample_id,class,<w1>,...`, one row per
    spectrum, ordered by class_id then sample_id. Values use shortest
    round-trip formatting, so load(save(lib)) is lossless."""
    ordered = sorted(lib.spectra, key=lambda sp: (sp.class_id, sp.sample_id))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "class"] + [f"{w:.6f}" for w in lib.grid])
        for sp in ordered:
            row = [sp.sample_id, lib.class_names[sp.class_id]]
            row.extend(repr(float(v)) for v in sp.reflectance)
            writer.writerow(row)


def load_library(path, format: str = "csv", allowed_classes: list[str] | None = None) -> SpectralLibrary:
    """Load a library CSV written by save_library.

    Class ids are assigned by sorted class name. If allowed_classes is given,
    any other class name in the file is a validation error.
    """
    if format != "csv":
        raise ValidationError(f"unsupported library format {format!r}")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read library: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, no spectra") from None
        if len(header) < 4 or header[0].strip() != "sample_id" or header[1].strip() != "class":
            raise ParseError(f"{path}: header must start with sample_id,class followed by bands")
        try:
            wavelengths = np.array([float(h) for h in header[2:]], dtype=float)
        except ValueError as exc:
            raise ParseError(f"{path}: non-numeric wavelength in header: {exc}") from None
        if not np.all(np.diff(wavelengths) > 0):
            raise ValidationError(f"{path}: header wavelengths not strictly increasing")
        grid = np.round(wavelengths, GRID_DECIMALS)

        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            sample_id = row[0].strip() if row else f"<line {lineno}>"
            if len(row) != 2 + grid.size:
                raise ParseError(
                    f"{path}: row for sample {sample_id!r} (line {lineno}) has "
                    f"{len(row) - 2} values for {grid.size} bands"
                )
            name = row[1].strip()
            try:
                vals = np.array([float(v) for v in row[2:]], dtype=float)
            except ValueError as exc:
                raise ParseError(f"{path}: bad value for sample {sample_id!r}: {exc}") from None
            rows.append((sample_id, name, vals))

    if not rows:
        raise ParseError(f"{path}: no spectra")

    names = sorted({name for _, name, _ in rows})
    if allowed_classes is not None:
        unknown = [n for n in names if n not in allowed_classes]
        if unknown:
            raise ValidationError(f"{path}: unknown classes {unknown}")
    name_to_id = {name: i for i, name in enumerate(names)}
    spectra = [
        Spectrum(grid, vals, name_to_id[name], sample_id) for sample_id, name, vals in rows
    ]
    return SpectralLibrary(spectra, grid, {i: n for n, i in name_to_id.items()})


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------

def preprocess(
    lib: SpectralLibrary,
    wl_range: tuple[float, float] = (0.35, 2.6),
    step: float = 0.005,
) -> SpectralLibrary:
    """Resample every spectrum to the uniform grid over wl_range (linear
    interpolation) and divide each by its own maximum.

    Spectra that do not cover the requested range are dropped with a warning.
    Idempotent: applying preprocess twice gives bitwise the same library.
    """
    lo, hi = float(wl_range[0]), float(wl_range[1])
    grid = make_grid(lo, hi, step)
    kept: list[Spectrum] = []
    rejected: list[str] = []
    for sp in lib.spectra:
        if sp.wavelengths[0] > lo + 1e-9 or sp.wavelengths[-1] < hi - 1e-9:
            rejected.append(sp.sample_id)
            continue
        vals = np.interp(grid, sp.wavelengths, sp.reflectance)
        peak = vals.max()
        if peak <= 0.0:
            raise DomainError(f"spectrum {sp.sample_id!r}: zero maximum, cannot normalize")
        kept.append(Spectrum(grid, vals / peak, sp.class_id, sp.sample_id))
    if rejected:
        warnings.warn(
            f"preprocess rejected {len(rejected)} spectra not covering "
            f"[{lo}, {hi}] um: {rejected}",
            stacklevel=2,
        )
    if not kept:
        raise ValidationError("no spectra cover the requested range")
    surviving = {sp.class_id for sp in kept}
    class_names = {cid: n for cid, n in lib.class_names.items() if cid in surviving}
    return SpectralLibrary(kept, grid, class_names)


# ---------------------------------------------------------------------------
# Class balancing by convex mixing
# ---------------------------------------------------------------------------

def balance_classes(lib: SpectralLibrary, target_per_class: int, seed: int) -> SpectralLibrary:
    """Grow every class to exactly target_per_class spectra.

    Each synthesized spectrum is a convex combination of 2 or 3 distinct
    same-class parents with Dirichlet(1,...,1) weights. Deterministic given
    the seed.
    """
    groups = lib.by_class()
    for cid, members in groups.items():
        if len(members) < 2:
            raise ValidationError(
                f"class {lib.class_names[cid]!r} has {len(members)} spectra; need >= 2 to mix"
            )
    max_size = max(len(m) for m in groups.values())
    if target_per_class < max_size:
        raise ValidationError(
            f"target_per_class {target_per_class} below largest class size {max_size}"
        )
    rng = np.random.default_rng(seed)
    existing_ids = {sp.sample_id for sp in lib.spectra}
    spectra = list(lib.spectra)
    for cid in sorted(groups):
        members = groups[cid]
        counter = 0
        for _ in range(target_per_class - len(members)):
            n_parents = int(rng.integers(2, 4))
            parents = rng.choice(len(members), size=n_parents, replace=False)
            weights = rng.dirichlet(np.ones(n_parents))
            vals = np.zeros(lib.n_bands)
            for w, p in zip(weights, parents):
                vals += w * members[p].reflectance
            while f"{lib.class_names[cid]}_mix{counter:03d}" in existing_ids:
                counter += 1
            sample_id = f"{lib.class_names[cid]}_mix{counter:03d}"
            existing_ids.add(sample_id)
            counter += 1
            spectra.append(Spectrum(lib.grid, vals, cid, sample_id))
    return SpectralLibrary(spectra, lib.grid, dict(lib.class_names))


# ---------------------------------------------------------------------------
# DMP blur
# ---------------------------------------------------------------------------

@dataclass
class BlurKernel:
    """3x3 Gaussian blur kernel parameterized by its normalized center weight."""

    weights: np.ndarray
    dmp: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (3, 3):
            raise ValidationError(f"kernel must be 3x3, got {w.shape}")
        if np.any(w < 0):
            raise ValidationError("kernel weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError(f"kernel weights sum to {w.sum()!r}, not 1")
        if abs(w[1, 1] - self.dmp) > 1e-6:
            raise ValidationError(f"center weight {w[1, 1]!r} differs from dmp {self.dmp!r}")
        corners = [w[0, 0], w[0, 2], w[2, 0], w[2, 2]]
        edges = [w[0, 1], w[1, 0], w[1, 2], w[2, 1]]
        if len(set(corners)) != 1 or len(set(edges)) != 1:
            raise ValidationError("kernel lacks 4-fold symmetry")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


_STENCIL_SQ = np.array([[2.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 2.0]])


def _center_weight(variance: float) -> float:
    w = np.exp(-_STENCIL_SQ / (2.0 * variance))
    return float(w[1, 1] / w.sum())


def dmp_to_kernel(dmp: float) -> BlurKernel:
    """Solve for the isotropic Gaussian on the 3x3 stencil whose normalized
    center weight equals dmp (bisection on the variance; the center weight is
    strictly decreasing in the variance, so the root is unique). dmp = 1
    returns the delta kernel."""
    if not (1.0 / 9.0 < dmp <= 1.0):
        raise DomainError(f"dmp must lie in (1/9, 1], got {dmp!r}")
    if dmp == 1.0:
        weights = np.zeros((3, 3))
        weights[1, 1] = 1.0
        return BlurKernel(weights, 1.0)
    lo, hi = 1e-6, 1e3
    if _center_weight(hi) > dmp:
        raise DomainError(
            f"dmp {dmp!r} is below the center weight reachable within the "
            f"solver bracket (>= {_center_weight(hi):.6f})"
        )
    var = hi
    for _ in range(500):
        var = 0.5 * (lo + hi)
        c = _center_weight(var)
        if abs(c - dmp) <= 1e-9:
            break
        if c > dmp:
            lo = var
        else:
            hi = var
    weights = np.exp(-_STENCIL_SQ / (2.0 * var))
    weights /= weights.sum()
    return BlurKernel(weights, dmp)


def blur_layout(size: int, seed: int) -> tuple[int, int, np.ndarray]:
    """Seeded placement of `size` spectra on the smallest near-square grid.

    Returns (rows, cols, order) where order has rows*cols entries: the first
    `size` are a permutation of 0..size-1 and the rest are random repeats used
    only as padding.
    """
    rows = math.ceil(math.sqrt(size))
    cols = math.ceil(size / rows)
    rng = np.random.default_rng(seed)
    order = rng.permutation(size)
    n_pad = rows * cols - size
    if n_pad:
        order = np.concatenate([order, rng.integers(0, size, size=n_pad)])
    return rows, cols, order


def blur_library(lib: SpectralLibrary, dmp: float, seed: int) -> SpectralLibrary:
    """Blur the library as a randomly arranged datacube.

    Spectra are placed on a 2-D grid by a seeded permutation (padding cells
    repeat seeded-random spectra and are discarded afterwards), every
    wavelength plane is convolved with the dmp kernel under toroidal wrap,
    and the blurred spectra keep their original labels, ids, and order.
    """
    kernel = dmp_to_kernel(dmp)
    if dmp == 1.0:
        return SpectralLibrary(list(lib.spectra), lib.grid, dict(lib.class_names))
    rows, cols, order = blur_layout(len(lib), seed)
    cube = lib.values()[order].reshape(rows, cols, lib.n_bands)
    out = np.zeros_like(cube)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            out += kernel.weights[dr + 1, dc + 1] * np.roll(cube, (-dr, -dc), axis=(0, 1))
    flat = out.reshape(rows * cols, lib.n_bands)
    positions = np.empty(len(lib), dtype=int)
    positions[order[: len(lib)]] = np.arange(len(lib))
    spectra = [
        Spectrum(lib.grid, flat[positions[m]], sp.class_id, sp.sample_id)
        for m, sp in enumerate(lib.spectra)
    ]
    return SpectralLibrary(spectra, lib.grid, dict(lib.class_names))


# ---------------------------------------------------------------------------
# Train/test split
# ---------------------------------------------------------------------------

def split_train_test(
    lib: SpectralLibrary, train_per_class: int, test_per_class: int, seed: int
) -> tuple[SpectralLibrary, SpectralLibrary]:
    """Disjoint per-class seeded split with exact counts.

    Within each class, candidates are ordered by sample_id before the seeded
    shuffle, so the selection depends only on the ids, not on list order.
    """
    rng = np.random.default_rng(seed)
    train: list[Spectrum] = []
    test: list[Spectrum] = []
    groups = lib.by_class()
    for cid in sorted(groups):
        members = sorted(groups[cid], key=lambda sp: sp.sample_id)
        need = train_per_class + test_per_class
        if len(members) < need:
            raise ValidationError(
                f"class {lib.class_names[cid]!r} has {len(members)} spectra, needs {need}"
            )
        perm = rng.permutation(len(members))
        train.extend(members[i] for i in perm[:train_per_class])
        test.extend(members[i] for i in perm[train_per_class:need])
    names = dict(lib.class_names)
    return (
        SpectralLibrary(train, lib.grid, names),
        SpectralLibrary(test, lib.grid, dict(names)),
    )


# ---------------------------------------------------------------------------
# Synthetic libraries (the benchmark's stand-in for proprietary archives)
# ---------------------------------------------------------------------------

def synthetic_library(
    n_classes: int,
    per_class: int,
    seed: int,
    wl_range: tuple[float, float] = (0.35, 2.6),
    step: float = 0.005,
    dip_depth: float = 0.55,
    dip_width_um: float = 0.07,
) -> SpectralLibrary:
    """Generate a library of smooth continua with one Gaussian absorption dip
    per class at a class-specific center wavelength.

    Per-sample jitter on continuum slope/curvature and dip depth/width gives
    intra-class variation while the dip centers stay fixed per class. Use
    dip_centers() for the ground-truth minima.
    """
    if n_classes < 1 or per_class < 1:
        raise ValidationError("need n_classes >= 1 and per_class >= 1")
    grid = make_grid(wl_range[0], wl_range[1], step)
    centers = dip_centers(n_classes, wl_range)
    rng = np.random.default_rng(seed)
    lo, hi = wl_range
    t = (grid - lo) / (hi - lo)
    spectra: list[Spectrum] = []
    class_names = {c: f"class{c:02d}" for c in range(n_classes)}
    for c in range(n_classes):
        for m in range(per_class):
            base = 0.75 + rng.uniform(-0.05, 0.05)
            slope = rng.uniform(-0.12, 0.12)
            curv = rng.uniform(-0.08, 0.08)
            continuum = base + slope * (t - 0.5) + curv * (t - 0.5) ** 2
            depth = dip_depth * (1.0 + rng.uniform(-0.15, 0.15))
            width = dip_width_um * (1.0 + rng.uniform(-0.15, 0.15))
            dip = depth * np.exp(-0.5 * ((grid - centers[c]) / width) ** 2)
            vals = np.clip(continuum * (1.0 - dip), 1e-4, None)
            spectra.append(Spectrum(grid, vals, c, f"{class_names[c]}_s{m:03d}"))
    return SpectralLibrary(spectra, grid, class_names)


def dip_centers(n_classes: int, wl_range: tuple[float, float] = (0.35, 2.6)) -> np.ndarray:
    """Ground-truth dip center wavelengths used by synthetic_library."""
    lo, hi = wl_range
    span = hi - lo
    return np.linspace(lo + 0.18 * span, hi - 0.12 * span, n_classes)
