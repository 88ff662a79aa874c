"""Viterbi state labeling of wavelet coefficient chains and sign augmentation.

A trained per-wavelength chain model turns the L x N coefficient matrix of a
spectrum into an L x N integer label matrix (most probable state path per
wavelength) plus the per-wavelength best-path log-probability. Sign
augmentation multiplies each label by the sign of its coefficient so that
decreasing and increasing fluctuations become distinguishable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError
from .nhmc import ChainParams, NhmcModel, _log_emissions
from .wavelet import CoeffMatrix, uwt


@dataclass
class LabelArray:
    """L x N state labels for one spectrum.

    Unsigned labels are in {0..k-1} (binary models: {0, 1}). Signed labels
    carry the coefficient sign, with 0 never signed. log_likelihoods holds
    the per-wavelength joint log-probability of the decoded path.
    """

    labels: np.ndarray
    log_likelihoods: np.ndarray
    signed: bool = False
    model_kind: str = "gmm"

    def __post_init__(self):
        lab = np.asarray(self.labels)
        ll = np.asarray(self.log_likelihoods, dtype=float)
        if lab.ndim != 2:
            raise ValidationError(f"labels must be 2-D (L, N), got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            lab = lab.astype(np.int16)
        if ll.shape != (lab.shape[1],):
            raise ValidationError(
                f"log_likelihoods must have one entry per wavelength ({lab.shape[1]}), got {ll.shape}"
            )
        if not self.signed and lab.size and lab.min() < 0:
            raise ValidationError("negative label in an unsigned array")
        lab = np.ascontiguousarray(lab)
        lab.flags.writeable = False
        ll.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "log_likelihoods", ll)

    @property
    def L(self) -> int:
        return self.labels.shape[0]

    @property
    def N(self) -> int:
        return self.labels.shape[1]

    def flatten(self) -> np.ndarray:
        """Row-major (scale-major) feature vector of length L*N."""
        return self.labels.astype(float).ravel()


def _viterbi_batch(
    log_initial: np.ndarray, log_transitions: np.ndarray, logb: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Max-product decoding for M chains at once.

    logb is (M, L, k); log_transitions is (L-1, k, k) with (j, i) = parent i
    to child j. Returns paths (M, L) and best-path log-probability (M,).
    All argmax ties resolve to the lowest state index.
    """
    M, L, k = logb.shape
    psi = np.empty((M, L, k), dtype=np.int32)
    delta = log_initial[None, :] + logb[:, 0]
    for s in range(1, L):
        cand = delta[:, :, None] + log_transitions[s - 1].T[None, :, :]
        psi[:, s] = np.argmax(cand, axis=1)
        delta = cand.max(axis=1) + logb[:, s]
    paths = np.empty((M, L), dtype=np.int16)
    paths[:, L - 1] = np.argmax(delta, axis=1)
    rows = np.arange(M)
    logp = delta[rows, paths[:, L - 1]]
    for s in range(L - 2, -1, -1):
        paths[:, s] = psi[rows, s + 1, paths[:, s + 1]]
    return paths, logp


def viterbi_gmm(chain, params: ChainParams) -> tuple[np.ndarray, float]:
    """Most probable state path for one coefficient chain under a Gaussian
    chain model, with its joint log-probability log p(path, w)."""
    w = np.asarray(chain, dtype=float)
    if w.ndim != 1 or w.size != params.L:
        raise ValidationError(f"chain must have length L={params.L}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValidationError("non-finite chain values")
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.initial_probs)
        log_A = np.log(params.transitions)
    logb = _log_emissions(w[None, :], params.variances)
    paths, logp = _viterbi_batch(log_pi, log_A, logb)
    return paths[0].astype(int), float(logp[0])


def _wavelength_parts(model, n: int, W: np.ndarray):
    """(log initial, log transitions, log emissions) at wavelength n for a
    batch of chains W (M, L), for either model kind."""
    if isinstance(model, NhmcModel):
        ch = model.chains[n]
        with np.errstate(divide="ignore"):
            return np.log(ch.initial_probs), np.log(ch.transitions), _log_emissions(W, ch.variances)
    from .mog import MogModel, mog_log_emissions

    if isinstance(model, MogModel):
        ch = model.chains[n]
        with np.errstate(divide="ignore"):
            return np.log(ch.initial_probs), np.log(ch.transitions), mog_log_emissions(W, ch)
    raise ValidationError(f"unsupported model type {type(model).__name__}")


def model_kind(model) -> str:
    if isinstance(model, NhmcModel):
        return "gmm"
    from .mog import MogModel

    if isinstance(model, MogModel):
        return "mog"
    raise ValidationError(f"unsupported model type {type(model).__name__}")


def label_tensor(tensor, model) -> tuple[np.ndarray, np.ndarray]:
    """Decode every chain of an (M, L, N) coefficient tensor.

    Returns (labels (M, L, N) ints, log_likelihoods (M, N)). Wavelengths are
    independent; spectra at one wavelength are decoded in a single batch.
    """
    T = np.asarray(tensor, dtype=float)
    if T.ndim != 3:
        raise ValidationError(f"coefficient tensor must be (M, L, N), got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise ValidationError("non-finite coefficient tensor")
    M, L, N = T.shape
    if L != model.L or N != model.N:
        raise ValidationError(
            f"tensor is (L={L}, N={N}) but model expects (L={model.L}, N={model.N})"
        )
    labels = np.empty((M, L, N), dtype=np.int16)
    lls = np.empty((M, N))
    for n in range(N):
        log_pi, log_A, logb = _wavelength_parts(model, n, T[:, :, n])
        paths, logp = _viterbi_batch(log_pi, log_A, logb)
        labels[:, :, n] = paths
        lls[:, n] = logp
    return labels, lls


def label_coeffs(coeffs, model) -> LabelArray:
    """Label a precomputed L x N coefficient matrix."""
    if isinstance(coeffs, CoeffMatrix):
        if coeffs.wavelet != model.wavelet:
            raise ValidationError(
                f"coefficients use wavelet {coeffs.wavelet!r} but the model was "
                f"trained with {model.wavelet!r}"
            )
        W = coeffs.values
    else:
        W = np.asarray(coeffs, dtype=float)
    labels, lls = label_tensor(W[None, :, :], model)
    return LabelArray(labels=labels[0], log_likelihoods=lls[0], model_kind=model_kind(model))


def label_spectrum(spectrum, model) -> LabelArray:
    """Wavelet-analyze a spectrum with the model's configuration, then decode
    each wavelength's chain. The spectrum must sit on the model's grid."""
    if model.grid is not None and not np.array_equal(spectrum.wavelengths, model.grid):
        raise ValidationError("spectrum wavelengths do not match the model grid")
    if model.grid is None and spectrum.n_bands != model.N:
        raise ValidationError(
            f"spectrum has {spectrum.n_bands} bands but the model expects {model.N}"
        )
    coeffs = uwt(spectrum.reflectance, L=model.L, wavelet=model.wavelet)
    return label_coeffs(coeffs, model)


def label_library(library, model) -> list[LabelArray]:
    """Label every spectrum of a library (batched across spectra)."""
    if model.grid is not None and not np.array_equal(library.grid, model.grid):
        raise ValidationError("library grid does not match the model grid")
    values = library.values()
    tensor = np.stack([uwt(v, L=model.L, wavelet=model.wavelet).values for v in values])
    labels, lls = label_tensor(tensor, model)
    kind = model_kind(model)
    return [
        LabelArray(labels=labels[m], log_likelihoods=lls[m], model_kind=kind)
        for m in range(len(library))
    ]


def add_signs(labels: LabelArray, coeffs) -> LabelArray:
    """Multiply each label by the sign of its coefficient.

    sign(0) is taken as +1, which never matters in practice because label 0
    stays 0 under any sign. Input must be unsigned.
    """
    if labels.signed:
        raise ValidationError("labels are already signed")
    W = coeffs.values if isinstance(coeffs, CoeffMatrix) else np.asarray(coeffs, dtype=float)
    if W.shape != labels.labels.shape:
        raise ValidationError(
            f"coefficients {W.shape} do not match labels {labels.labels.shape}"
        )
    signed = np.where(W < 0, -labels.labels, labels.labels)
    return LabelArray(
        labels=signed,
        log_likelihoods=labels.log_likelihoods,
        signed=True,
        model_kind=labels.model_kind,
    )


def save_labels_csv(arr: LabelArray, path) -> None:
    """Write the label matrix as L rows x N integer columns. A leading
    comment line records the model kind and sign flag for the loader."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# model_kind={arr.model_kind} signed={int(arr.signed)}\n")
        for s in range(arr.L):
            fh.write(",".join(str(int(v)) for v in arr.labels[s]) + "\n")


def load_labels_csv(path) -> LabelArray:
    """Read a label matrix written by save_labels_csv. Per-wavelength
    likelihoods are not stored in the CSV and come back as zeros."""
    kind = "gmm"
    signed = False
    rows: list[list[int]] = []
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read labels: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("model_kind="):
                        kind = tok.split("=", 1)[1]
                    elif tok.startswith("signed="):
                        signed = tok.split("=", 1)[1] == "1"
                continue
            try:
                rows.append([int(v) for v in line.split(",")])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-integer label: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no label rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ParseError(f"{path}: ragged label rows (widths {sorted(widths)})")
    labels = np.array(rows, dtype=np.int16)
    return LabelArray(
        labels=labels,
        log_likelihoods=np.zeros(labels.shape[1]),
        signed=signed,
        model_kind=kind,
    )
