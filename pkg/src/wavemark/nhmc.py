"""Per-wavelength non-homogeneous hidden Markov chains over wavelet scales.

Each wavelength offset gets its own chain of L hidden states (one per scale)
with zero-mean Gaussian emissions whose variance depends on (state, scale)
and scale-dependent transition matrices. Transition matrices are column
stochastic: transitions[s][j, i] = p(S_s = j | S_{s-1} = i), so each column i
sums to 1. Training is Baum-Welch EM over the chains of all training spectra
at one offset; inference is a scaled forward-backward pass.
"""

from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParseError, ValidationError

STOCHASTIC_TOL = 1e-9
MODEL_FORMAT_VERSION = 1
TRANSITION_INDEXING = "transitions[s][j][i] = p(S_s = j | S_{s-1} = i); each column i sums to 1"


@dataclass
class ChainParams:
    """Parameters of one chain: k states across L scales.

    initial_probs: (k,) state distribution at the coarsest scale.
    transitions: (L-1, k, k); transitions[t] couples scale t+1 to scale t+2
        (1-based), column stochastic with (j, i) = parent i to child j.
    variances: (L, k) zero-mean Gaussian emission variances.
    """

    initial_probs: np.ndarray
    transitions: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.initial_probs, dtype=float)
        a = np.asarray(self.transitions, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValidationError(f"initial_probs must be a k>=2 vector, got shape {p.shape}")
        k = p.size
        if v.ndim != 2 or v.shape[1] != k:
            raise ValidationError(f"variances must be (L, {k}), got {v.shape}")
        L = v.shape[0]
        if a.shape != (L - 1, k, k):
            raise ValidationError(f"transitions must be ({L - 1}, {k}, {k}), got {a.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValidationError(f"initial_probs is not a distribution (sum {p.sum()!r})")
        colsums = a.sum(axis=1)
        if np.any(a < 0) or np.any(np.abs(colsums - 1.0) > STOCHASTIC_TOL):
            worst = float(np.abs(colsums - 1.0).max()) if a.size else 0.0
            raise ValidationError(f"transition columns must sum to 1 (worst deviation {worst:.3g})")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValidationError("variances must be finite and > 0")
        for arr in (p, a, v):
            arr.flags.writeable = False
        object.__setattr__(self, "initial_probs", p)
        object.__setattr__(self, "transitions", a)
        object.__setattr__(self, "variances", v)

    @property
    def k(self) -> int:
        return self.initial_probs.size

    @property
    def L(self) -> int:
        return self.variances.shape[0]


@dataclass
class Posteriors:
    """Smoothed posteriors of one chain given one coefficient sequence."""

    gamma: np.ndarray  # (L, k) state posteriors per scale
    xi: np.ndarray  # (L-1, k, k) with xi[t][i, j] = P(S_{t+1}=i, S_{t+2}=j | w)
    log_likelihood: float


@dataclass
class TrainConfig:
    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0


@dataclass
class EmResult:
    """Outcome of em_train: fitted params plus the E-step log-likelihood
    trace (one entry per E step; non-decreasing) and degeneracy warnings."""

    params: ChainParams
    log_likelihoods: list[float]
    converged: bool
    warnings: list[str] = field(default_factory=list)

    @property
    def n_iter(self) -> int:
        return len(self.log_likelihoods) - 1


def _log_emissions(W: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """(M, L, k) log Normal(w; 0, var) for every chain, scale, state."""
    var = variances[None, :, :]
    return -0.5 * (np.log(2.0 * np.pi * var) + (W[:, :, None] ** 2) / var)


def _forward_backward_batch(
    W: np.ndarray, params: ChainParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scaled forward-backward over M chains at once.

    Returns (gamma (M, L, k), xi (M, L-1, k, k), log_likelihood (M,)).
    """
    M, L = W.shape
    k = params.k
    logb = _log_emissions(W, params.variances)
    shift = logb.max(axis=2)
    b = np.exp(logb - shift[:, :, None])

    alpha = np.empty((M, L, k))
    c = np.empty((M, L))
    a = params.initial_probs[None, :] * b[:, 0]
    c[:, 0] = a.sum(axis=1)
    _check_mass(c[:, 0], scale=1)
    alpha[:, 0] = a / c[:, 0, None]
    for s in range(1, L):
        A = params.transitions[s - 1]
        a = b[:, s] * (alpha[:, s - 1] @ A.T)
        c[:, s] = a.sum(axis=1)
        _check_mass(c[:, s], scale=s + 1)
        alpha[:, s] = a / c[:, s, None]

    beta = np.empty((M, L, k))
    beta[:, L - 1] = 1.0
    for s in range(L - 2, -1, -1):
        A = params.transitions[s]
        beta[:, s] = ((b[:, s + 1] * beta[:, s + 1]) @ A) / c[:, s + 1, None]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=2, keepdims=True)

    xi = np.empty((M, L - 1, k, k))
    for s in range(1, L):
        A = params.transitions[s - 1]
        raw = alpha[:, s - 1, :, None] * A.T[None, :, :] * (b[:, s] * beta[:, s])[:, None, :]
        xi[:, s - 1] = raw / raw.sum(axis=(1, 2), keepdims=True)

    ll = (np.log(c) + shift).sum(axis=1)
    return gamma, xi, ll


def _check_mass(c: np.ndarray, scale: int) -> None:
    if np.any(c <= 0.0) or not np.all(np.isfinite(c)):
        raise NumericError(f"probability mass vanished at scale {scale}")


def forward_backward(chain, params: ChainParams) -> Posteriors:
    """Exact smoothed posteriors for one coefficient chain.

    gamma rows and xi slices are normalized; log_likelihood is
    log p(w_1..L | params) from the forward scaling factors.
    """
    w = np.asarray(chain, dtype=float)
    if w.ndim != 1 or w.size != params.L:
        raise ValidationError(f"chain must have length L={params.L}, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValidationError("non-finite chain values")
    gamma, xi, ll = _forward_backward_batch(w[None, :], params)
    return Posteriors(gamma=gamma[0], xi=xi[0], log_likelihood=float(ll[0]))


def _variance_floor(W: np.ndarray) -> np.ndarray:
    """Per-scale floor 1e-8 * mean(w^2), with an absolute fallback for
    all-zero columns."""
    second = np.mean(W**2, axis=0)
    return np.maximum(1e-8 * second, 1e-30)


def _default_init(W: np.ndarray, k: int, floor: np.ndarray) -> ChainParams:
    """Deterministic start: per-scale variances from k quantile groups of
    |w|, uniform initial probabilities, 0.8-diagonal transitions."""
    M, L = W.shape
    variances = np.empty((L, k))
    for s in range(L):
        ordered = np.sort(np.abs(W[:, s]))
        groups = np.array_split(ordered, k)
        fallback = max(float(np.mean(W[:, s] ** 2)), floor[s])
        for i, g in enumerate(groups):
            variances[s, i] = float(np.mean(g**2)) if g.size else fallback
    variances = np.maximum(variances, floor[:, None])
    initial = np.full(k, 1.0 / k)
    trans = np.full((L - 1, k, k), 0.2 / (k - 1))
    idx = np.arange(k)
    trans[:, idx, idx] = 0.8
    return ChainParams(initial, trans, variances)


def _relabel_by_variance(params: ChainParams) -> ChainParams:
    """Permute states per scale so variances ascend (state 0 = smallest)."""
    L, k = params.variances.shape
    perms = [np.argsort(params.variances[s], kind="stable") for s in range(L)]
    variances = np.stack([params.variances[s][perms[s]] for s in range(L)])
    initial = params.initial_probs[perms[0]]
    transitions = np.stack(
        [params.transitions[t][np.ix_(perms[t + 1], perms[t])] for t in range(L - 1)]
    )
    return ChainParams(initial, transitions, variances)


def em_train(coeffs, k: int, config: TrainConfig | None = None, init: ChainParams | None = None) -> EmResult:
    """Baum-Welch EM over the chains of M training spectra at one offset.

    Args:
        coeffs: (M, L) coefficient chains, one row per training spectrum.
        k: number of hidden states (>= 2).
        config: convergence settings; defaults tol=1e-6 relative, 200 iters.
        init: optional starting ChainParams; the deterministic quantile
            initialization is used when omitted.

    Returns EmResult; the fitted params have states relabeled by ascending
    variance at every scale. Starved states (zero posterior mass) keep the
    floor variance and a uniform transition column, with a recorded warning.
    """
    W = np.asarray(coeffs, dtype=float)
    if W.ndim != 2:
        raise ValidationError(f"coeffs must be (M, L), got shape {W.shape}")
    M, L = W.shape
    if M < 2:
        raise ValidationError(f"need at least 2 training chains, got {M}")
    if k < 2:
        raise ValidationError(f"need k >= 2 states, got {k}")
    if L < 2:
        raise ValidationError(f"need at least 2 scales, got {L}")
    if not np.all(np.isfinite(W)):
        raise ValidationError("non-finite coefficients")
    cfg = config or TrainConfig()
    floor = _variance_floor(W)
    params = init if init is not None else _default_init(W, k, floor)
    if params.k != k or params.L != L:
        raise ValidationError(
            f"init has k={params.k}, L={params.L}; expected k={k}, L={L}"
        )

    lls: list[float] = []
    warn_seen: set[str] = set()
    converged = False
    for it in range(cfg.max_iter + 1):
        gamma, xi, ll_each = _forward_backward_batch(W, params)
        ll = float(ll_each.sum())
        lls.append(ll)
        if it > 0 and abs(ll - lls[-2]) <= cfg.tol * max(1.0, abs(lls[-2])):
            converged = True
            break
        if it == cfg.max_iter:
            break
        params = _m_step(W, gamma, xi, floor, warn_seen)

    result = EmResult(
        params=_relabel_by_variance(params),
        log_likelihoods=lls,
        converged=converged,
        warnings=sorted(warn_seen),
    )
    for msg in result.warnings:
        _warnings.warn(msg, stacklevel=2)
    return result


_MASS_EPS = 1e-12


def _m_step(
    W: np.ndarray,
    gamma: np.ndarray,
    xi: np.ndarray,
    floor: np.ndarray,
    warn_seen: set[str],
) -> ChainParams:
    M, L, k = gamma.shape
    initial = gamma[:, 0, :].mean(axis=0)
    initial = initial / initial.sum()

    transitions = np.empty((L - 1, k, k))
    for t in range(L - 1):
        num = xi[:, t].sum(axis=0)  # (parent i, child j)
        den = num.sum(axis=1)
        for i in range(k):
            if den[i] < _MASS_EPS:
                transitions[t, :, i] = 1.0 / k
                warn_seen.add(
                    f"state {i} starved at scale {t + 1}: transition column reset to uniform"
                )
            else:
                transitions[t, :, i] = num[i] / den[i]

    variances = np.empty((L, k))
    wsq = W**2
    for s in range(L):
        gsum = gamma[:, s, :].sum(axis=0)
        for i in range(k):
            if gsum[i] < _MASS_EPS:
                variances[s, i] = floor[s]
                warn_seen.add(f"state {i} starved at scale {s + 1}: variance held at floor")
            else:
                variances[s, i] = max(
                    float((gamma[:, s, i] * wsq[:, s]).sum() / gsum[i]), floor[s]
                )
    return ChainParams(initial, transitions, variances)


# ---------------------------------------------------------------------------
# Whole-model training
# ---------------------------------------------------------------------------

@dataclass
class NhmcModel:
    """One trained chain per wavelength, plus the wavelet configuration the
    coefficients came from."""

    chains: list[ChainParams]
    wavelet: str = "haar"
    grid: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.chains:
            raise ValidationError("model has no chains")
        k, L = self.chains[0].k, self.chains[0].L
        for i, ch in enumerate(self.chains):
            if ch.k != k or ch.L != L:
                raise ValidationError(f"chain {i} has k={ch.k}, L={ch.L}; expected ({k}, {L})")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float)
            if g.size != len(self.chains):
                raise ValidationError(
                    f"grid has {g.size} wavelengths for {len(self.chains)} chains"
                )
            g.flags.writeable = False
            object.__setattr__(self, "grid", g)

    @property
    def k(self) -> int:
        return self.chains[0].k

    @property
    def L(self) -> int:
        return self.chains[0].L

    @property
    def N(self) -> int:
        return len(self.chains)


def train_model(
    coeffs,
    k: int,
    config: TrainConfig | None = None,
    wavelet: str = "haar",
    grid=None,
) -> NhmcModel:
    """Train one chain per wavelength column of an (M, L, N) tensor.

    Columns are independent, so the result does not depend on processing
    order; training is deterministic given the config.
    """
    tensor = np.asarray(coeffs, dtype=float)
    if tensor.ndim != 3:
        raise ValidationError(f"coefficient tensor must be (M, L, N), got {tensor.shape}")
    if not np.all(np.isfinite(tensor)):
        raise ValidationError("non-finite coefficient tensor")
    cfg = config or TrainConfig()
    chains: list[ChainParams] = []
    iters: list[int] = []
    final_lls: list[float] = []
    all_warnings: list[str] = []
    for n in range(tensor.shape[2]):
        try:
            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore")
                fit = em_train(tensor[:, :, n], k, cfg)
        except (ValidationError, NumericError) as exc:
            raise type(exc)(f"wavelength {n}: {exc}") from exc
        chains.append(fit.params)
        iters.append(fit.n_iter)
        final_lls.append(fit.log_likelihoods[-1])
        all_warnings.extend(f"wavelength {n}: {w}" for w in fit.warnings)
    metadata = {
        "k": k,
        "L": tensor.shape[1],
        "n_training_spectra": tensor.shape[0],
        "seed": cfg.seed,
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "iterations": iters,
        "final_log_likelihood": float(np.sum(final_lls)),
        "warnings": all_warnings,
    }
    return NhmcModel(chains=chains, wavelet=wavelet, grid=grid, metadata=metadata)


def state_marginals(params: ChainParams) -> np.ndarray:
    """(L, k) marginal state probabilities per scale, propagated from the
    initial distribution through the transition matrices."""
    L, k = params.variances.shape
    marg = np.empty((L, k))
    marg[0] = params.initial_probs
    for s in range(1, L):
        marg[s] = params.transitions[s - 1] @ marg[s - 1]
    return marg


def diagonal_dominance(model: NhmcModel) -> float:
    """Fraction of transition columns whose diagonal entry is the largest.

    Diagnostic only: on persistent data this should be high, but it is
    data-dependent and never asserted.
    """
    hits = 0
    total = 0
    for ch in model.chains:
        for t in range(ch.L - 1):
            A = ch.transitions[t]
            hits += int(np.sum(np.argmax(A, axis=0) == np.arange(ch.k)))
            total += ch.k
    return hits / total if total else 0.0


# ---------------------------------------------------------------------------
# Sampling (test generator)
# ---------------------------------------------------------------------------

def sample_chain(params: ChainParams, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw one (states, coefficients) pair from the chain. Deterministic
    given the seed."""
    states, coeffs = sample_chains(params, 1, seed)
    return states[0], coeffs[0]


def sample_chains(params: ChainParams, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized sampler: (states (m, L) ints, coeffs (m, L) floats)."""
    rng = np.random.default_rng(seed)
    L, k = params.variances.shape
    states = np.empty((m, L), dtype=int)
    cum = np.cumsum(params.initial_probs)
    states[:, 0] = np.searchsorted(cum, rng.random(m) * cum[-1], side="right")
    for s in range(1, L):
        col_cum = np.cumsum(params.transitions[s - 1], axis=0)  # (child j, parent i)
        u = rng.random(m)
        prev = states[:, s - 1]
        bounds = col_cum[:, prev]  # (k, m)
        states[:, s] = (u[None, :] * bounds[-1] >= bounds).sum(axis=0)
    sigma = np.sqrt(params.variances[np.arange(L)[None, :], states])
    coeffs = rng.standard_normal((m, L)) * sigma
    return states, coeffs


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def save_model(model: NhmcModel, path) -> None:
    """Write the model as JSON; floats keep full precision so the round trip
    is lossless."""
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "model_kind": "gmm",
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
                "variances": ch.variances.tolist(),
            }
            for ch in model.chains
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> NhmcModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read model: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not a model file: {exc}") from exc
    kind = doc.get("model_kind")
    if kind != "gmm":
        raise ValidationError(f"{path}: expected a gmm model file, found model_kind={kind!r}")
    chains = [
        ChainParams(
            np.array(ch["initial_probs"]),
            np.array(ch["transitions"]),
            np.array(ch["variances"]),
        )
        for ch in doc["chains"]
    ]
    grid = None if doc.get("grid") is None else np.array(doc["grid"], dtype=float)
    model = NhmcModel(
        chains=chains, wavelet=doc.get("wavelet", "haar"), grid=grid, metadata=doc.get("metadata", {})
    )
    if model.k != doc["k"] or model.L != doc["L"] or model.N != doc["N"]:
        raise ValidationError(f"{path}: header (k, L, N) disagrees with chain contents")
    return model
