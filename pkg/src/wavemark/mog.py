"""Collapse of a k-state chain model into a binary mixture-of-Gaussians model.

State 0 stays the low-variance "smooth" state; states 1..k-1 merge into one
"large" state whose emission is a mixture of the original Gaussians weighted
by the propagated state marginals. The collapsed transition matrices follow
from marginalizing the joint distribution of consecutive states under the
binary state map, and the collapsed chain admits the same Viterbi decoding
with mixture emissions.
"""

from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMassError, ParseError, ValidationError
from .labeling import _viterbi_batch
from .nhmc import (
    MODEL_FORMAT_VERSION,
    STOCHASTIC_TOL,
    TRANSITION_INDEXING,
    ChainParams,
    NhmcModel,
    state_marginals,
)

COLLAPSE_TOL = 1e-12


@dataclass
class MogChainParams:
    """Binary chain at one wavelength.

    initial_probs: (q0, q1) at the coarsest scale.
    transitions: (L-1, 2, 2), column stochastic, (j, i) = parent i to child j.
    small_state_variance: (L,) variance of the smooth state per scale.
    mix_weights / mix_variances: (L, k-1) mixture defining the large state's
    emission density per scale; weights sum to 1 per scale.
    """

    initial_probs: np.ndarray
    transitions: np.ndarray
    small_state_variance: np.ndarray
    mix_weights: np.ndarray
    mix_variances: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.initial_probs, dtype=float)
        b = np.asarray(self.transitions, dtype=float)
        v0 = np.asarray(self.small_state_variance, dtype=float)
        mw = np.asarray(self.mix_weights, dtype=float)
        mv = np.asarray(self.mix_variances, dtype=float)
        if q.shape != (2,):
            raise ValidationError(f"initial_probs must be a 2-vector, got shape {q.shape}")
        if v0.ndim != 1:
            raise ValidationError(f"small_state_variance must be 1-D, got shape {v0.shape}")
        L = v0.size
        if b.shape != (L - 1, 2, 2):
            raise ValidationError(f"transitions must be ({L - 1}, 2, 2), got {b.shape}")
        if mw.ndim != 2 or mw.shape[0] != L or mw.shape != mv.shape:
            raise ValidationError(
                f"mixture arrays must both be ({L}, k-1), got {mw.shape} and {mv.shape}"
            )
        if np.any(q < 0) or abs(q.sum() - 1.0) > COLLAPSE_TOL:
            raise ValidationError(f"initial_probs is not a distribution (sum {q.sum()!r})")
        colsums = b.sum(axis=1)
        if np.any(b < 0) or np.any(np.abs(colsums - 1.0) > COLLAPSE_TOL):
            worst = float(np.abs(colsums - 1.0).max()) if b.size else 0.0
            raise ValidationError(f"transition columns must sum to 1 (worst deviation {worst:.3g})")
        if np.any(mw < 0) or np.any(np.abs(mw.sum(axis=1) - 1.0) > COLLAPSE_TOL):
            raise ValidationError("mixture weights must sum to 1 per scale")
        if np.any(v0 <= 0) or np.any(mv <= 0):
            raise ValidationError("variances must be > 0")
        for arr in (q, b, v0, mw, mv):
            arr.flags.writeable = False
        object.__setattr__(self, "initial_probs", q)
        object.__setattr__(self, "transitions", b)
        object.__setattr__(self, "small_state_variance", v0)
        object.__setattr__(self, "mix_weights", mw)
        object.__setattr__(self, "mix_variances", mv)

    @property
    def L(self) -> int:
        return self.small_state_variance.size

    @property
    def n_components(self) -> int:
        return self.mix_weights.shape[1]


@dataclass
class MogModel:
    """One collapsed binary chain per wavelength."""

    chains: list[MogChainParams]
    wavelet: str = "haar"
    grid: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.chains:
            raise ValidationError("model has no chains")
        L, nc = self.chains[0].L, self.chains[0].n_components
        for i, ch in enumerate(self.chains):
            if ch.L != L or ch.n_components != nc:
                raise ValidationError(f"chain {i} shape disagrees with chain 0")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float)
            if g.size != len(self.chains):
                raise ValidationError(
                    f"grid has {g.size} wavelengths for {len(self.chains)} chains"
                )
            g.flags.writeable = False
            object.__setattr__(self, "grid", g)

    @property
    def L(self) -> int:
        return self.chains[0].L

    @property
    def N(self) -> int:
        return len(self.chains)

    @property
    def k(self) -> int:
        """State count of the source model this was collapsed from."""
        return self.chains[0].n_components + 1


def _as_distribution(p, name: str) -> np.ndarray:
    v = np.asarray(p, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValidationError(f"{name} must be a vector of length >= 2, got shape {v.shape}")
    if np.any(v < 0) or abs(v.sum() - 1.0) > STOCHASTIC_TOL:
        raise ValidationError(f"{name} is not a distribution (sum {v.sum()!r})")
    return v


def collapse_state_probs(state_probs) -> np.ndarray:
    """Merge the per-state marginal into (smooth, large) = (p0, 1 - p0)."""
    p = _as_distribution(state_probs, "state_probs")
    return np.array([p[0], 1.0 - p[0]])


def collapse_transitions(transition_matrix, parent_probs) -> np.ndarray:
    """Collapse a k x k column-stochastic matrix to 2 x 2.

    parent_probs is the state marginal at the parent scale; the merged
    large-to-* entries are marginal-weighted averages over parent states
    1..k-1. Raises DegenerateMassError when the parent large-state mass is
    zero (the weighted average is then 0/0).
    """
    A = np.asarray(transition_matrix, dtype=float)
    p = _as_distribution(parent_probs, "parent_probs")
    k = p.size
    if A.shape != (k, k):
        raise ValidationError(f"transition matrix must be ({k}, {k}), got {A.shape}")
    colsums = A.sum(axis=0)
    if np.any(A < 0) or np.any(np.abs(colsums - 1.0) > STOCHASTIC_TOL):
        raise ValidationError("transition matrix is not column stochastic")
    tail = float(p[1:].sum())
    if tail <= 0.0:
        raise DegenerateMassError("large-state mass is zero at the parent scale")
    q00 = A[0, 0]
    q01 = float(A[1:, 0].sum())
    q10 = float(A[0, 1:] @ p[1:]) / tail
    q11 = float(A[1:, 1:].sum(axis=0) @ p[1:]) / tail
    return np.array([[q00, q10], [q01, q11]])


def mog_conditional_pdf(w, scale: int, which: int, params: MogChainParams):
    """Emission density p(w | Z = which) at a 1-based scale (1 = coarsest).

    State 0 is a single zero-mean Gaussian; state 1 is the weighted mixture.
    Accepts scalar or array w.
    """
    if not 1 <= scale <= params.L:
        raise ValidationError(f"scale must be in 1..{params.L}, got {scale}")
    if which not in (0, 1):
        raise ValidationError(f"state must be 0 or 1, got {which}")
    x = np.asarray(w, dtype=float)
    s = scale - 1
    if which == 0:
        var = params.small_state_variance[s]
        dens = np.exp(-0.5 * x**2 / var) / np.sqrt(2.0 * np.pi * var)
    else:
        weights = params.mix_weights[s]
        var = params.mix_variances[s]
        comps = np.exp(-0.5 * x[..., None] ** 2 / var) / np.sqrt(2.0 * np.pi * var)
        dens = comps @ weights
    return float(dens) if np.isscalar(w) else dens


def _mix_weights_for(p_s: np.ndarray, warn: set[str], scale: int) -> np.ndarray:
    tail = float(p_s[1:].sum())
    k1 = p_s.size - 1
    if tail <= 0.0:
        warn.add(f"zero large-state mass at scale {scale}: using equal mixture weights")
        return np.full(k1, 1.0 / k1)
    return p_s[1:] / tail


def collapse_chain(params: ChainParams, warn: set[str] | None = None, tag: str = "") -> MogChainParams:
    """Collapse one chain; degenerate scales fall back to uniform transition
    columns and equal mixture weights with a recorded warning."""
    warn_set = warn if warn is not None else set()
    prefix = f"{tag}: " if tag else ""
    marg = state_marginals(params)
    L = params.L
    q = collapse_state_probs(params.initial_probs)
    trans = np.empty((L - 1, 2, 2))
    for t in range(L - 1):
        try:
            trans[t] = collapse_transitions(params.transitions[t], marg[t])
        except DegenerateMassError:
            warn_set.add(
                f"{prefix}zero large-state mass at scale {t + 1}: "
                "large-state transition column set to uniform"
            )
            A = params.transitions[t]
            trans[t] = np.array([[A[0, 0], 0.5], [float(A[1:, 0].sum()), 0.5]])
    weights = np.stack(
        [_mix_weights_for(marg[s], warn_set, s + 1) for s in range(L)]
    )
    mog = MogChainParams(
        initial_probs=q,
        transitions=trans,
        small_state_variance=params.variances[:, 0].copy(),
        mix_weights=weights,
        mix_variances=params.variances[:, 1:].copy(),
    )
    if warn is None:
        for msg in sorted(warn_set):
            _warnings.warn(msg, stacklevel=2)
    return mog


def collapse_model(model: NhmcModel) -> MogModel:
    """Collapse every per-wavelength chain of a trained model.

    Expects variance-ordered states (state 0 = smallest variance), which
    training guarantees. Degeneracy warnings are collected into the
    metadata and emitted once each.
    """
    if model.k < 2:
        raise ValidationError("collapse needs k >= 2")
    warn_set: set[str] = set()
    chains = [
        collapse_chain(ch, warn=warn_set, tag=f"wavelength {n}")
        for n, ch in enumerate(model.chains)
    ]
    for msg in sorted(warn_set):
        _warnings.warn(msg, stacklevel=2)
    metadata = dict(model.metadata)
    metadata["collapsed_from_k"] = model.k
    metadata["collapse_warnings"] = sorted(warn_set)
    return MogModel(chains=chains, wavelet=model.wavelet, grid=model.grid, metadata=metadata)


def mog_log_emissions(W: np.ndarray, params: MogChainParams) -> np.ndarray:
    """(M, L, 2) log emission densities for a batch of chains W (M, L)."""
    M, L = W.shape
    v0 = params.small_state_variance[None, :]
    logb = np.empty((M, L, 2))
    logb[:, :, 0] = -0.5 * (np.log(2.0 * np.pi * v0) + W**2 / v0)
    mv = params.mix_variances[None, :, :]
    comp = -0.5 * (np.log(2.0 * np.pi * mv) + (W[:, :, None] ** 2) / mv)
    with np.errstate(divide="ignore"):
        comp = comp + np.log(params.mix_weights)[None, :, :]
    peak = comp.max(axis=2)
    logb[:, :, 1] = peak + np.log(np.exp(comp - peak[:, :, None]).sum(axis=2))
    return logb


def viterbi_mog(chain, params: MogChainParams) -> tuple[np.ndarray, float]:
    """Most probable binary state path for one coefficient chain, with its
    joint log-probability. Ties go to state 0."""
    w = np.asarray(chain, dtype=float)
    if w.ndim != 1 or w.size != params.L:
        raise ValidationError(f"chain must have length L={params.L}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValidationError("non-finite chain values")
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.initial_probs)
        log_B = np.log(params.transitions)
    logb = mog_log_emissions(w[None, :], params)
    paths, logp = _viterbi_batch(log_pi, log_B, logb)
    return paths[0].astype(int), float(logp[0])


# ---------------------------------------------------------------------------
# JSON serialization (same envelope as the gmm model, model_kind = "mog")
# ---------------------------------------------------------------------------

def save_model(model: MogModel, path) -> None:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "model_kind": "mog",
        "indexing": TRANSITION_INDEXING,
        "k": model.k,
        "L": model.L,
        "N": model.N,
        "wavelet": model.wavelet,
        "grid": None if model.grid is None else model.grid.tolist(),
        "metadata": model.metadata,
        "chains": [
            {
                "initial_probs": ch.initial_probs.tolist(),
                "transitions": ch.transitions.tolist(),
                "small_state_variance": ch.small_state_variance.tolist(),
                "mix_weights": ch.mix_weights.tolist(),
                "mix_variances": ch.mix_variances.tolist(),
            }
            for ch in model.chains
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> MogModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read model: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not a model file: {exc}") from exc
    kind = doc.get("model_kind")
    if kind != "mog":
        raise ValidationError(f"{path}: expected a mog model file, found model_kind={kind!r}")
    chains = [
        MogChainParams(
            np.array(ch["initial_probs"]),
            np.array(ch["transitions"]),
            np.array(ch["small_state_variance"]),
            np.array(ch["mix_weights"]),
            np.array(ch["mix_variances"]),
        )
        for ch in doc["chains"]
    ]
    grid = None if doc.get("grid") is None else np.array(doc["grid"], dtype=float)
    model = MogModel(
        chains=chains, wavelet=doc.get("wavelet", "haar"), grid=grid, metadata=doc.get("metadata", {})
    )
    if model.L != doc["L"] or model.N != doc["N"]:
        raise ValidationError(f"{path}: header (L, N) disagrees with chain contents")
    return model
