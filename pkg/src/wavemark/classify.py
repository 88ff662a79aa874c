"""Nearest-neighbor and RBF-SVM classification over feature vectors.

Feature vectors may be raw spectra, wavelet coefficients, flattened label
arrays or per-wavelength power sums; the classifiers are agnostic. NN uses
exact per-query distances so tie behavior is reproducible. The SVM is a
one-vs-one RBF machine trained by sequential minimal optimization with a
cross-validated grid search over (C, gamma).
"""

from __future__ import annotations

import json
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParseError, ValidationError

FEATURE_KINDS = (
    "spectrum",
    "coeffs",
    "gmm_labels",
    "gmm_sign",
    "mog_labels",
    "mog_sign",
    "rivard",
)
NN_METRICS = ("l1", "l2", "cosine")
DEFAULT_C_GRID = tuple(2.0**e for e in range(-5, 16, 2))
DEFAULT_GAMMA_GRID = tuple(2.0**e for e in range(-15, 4, 2))


@dataclass
class FeatureSet:
    """M equal-length feature vectors with class ids."""

    vectors: np.ndarray
    class_ids: np.ndarray
    feature_kind: str
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.vectors, dtype=float)
        y = np.asarray(self.class_ids)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValidationError(f"vectors must be (M, D) with M >= 1, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("non-finite feature values")
        if y.shape != (X.shape[0],):
            raise ValidationError(
                f"class_ids must have one entry per vector ({X.shape[0]}), got {y.shape}"
            )
        if self.feature_kind not in FEATURE_KINDS:
            raise ValidationError(
                f"unknown feature kind {self.feature_kind!r}; expected one of {FEATURE_KINDS}"
            )
        y = y.astype(int)
        if self.class_names:
            if np.any(y < 0) or np.any(y >= len(self.class_names)):
                raise ValidationError("class id outside the declared class list")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "vectors", X)
        object.__setattr__(self, "class_ids", y)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


# ---------------------------------------------------------------------------
# Nearest neighbor
# ---------------------------------------------------------------------------

def _query_matrix(query, dim: int) -> np.ndarray:
    Q = np.asarray(query, dtype=float)
    single = Q.ndim == 1
    if single:
        Q = Q[None, :]
    if Q.ndim != 2 or Q.shape[1] != dim:
        raise ValidationError(f"query dimension {Q.shape} does not match training dim {dim}")
    if not np.all(np.isfinite(Q)):
        raise ValidationError("non-finite query values")
    return Q


def nn_classify_batch(train: FeatureSet, queries, metric: str = "l2") -> np.ndarray:
    """Class of the nearest training vector for each query row.

    Distance ties resolve to the lowest training index. Cosine ranks by
    similarity and rejects zero vectors.
    """
    if metric not in NN_METRICS:
        raise ValidationError(f"unknown metric {metric!r}; expected one of {NN_METRICS}")
    X = train.vectors
    Q = _query_matrix(queries, train.dim)
    if metric == "cosine":
        xn = np.linalg.norm(X, axis=1)
        qn = np.linalg.norm(Q, axis=1)
        if np.any(xn == 0):
            raise DomainError("zero training vector under the cosine metric")
        if np.any(qn == 0):
            raise DomainError("zero query vector under the cosine metric")
        sim = (Q @ X.T) / (qn[:, None] * xn[None, :])
        best = np.argmax(sim, axis=1)
        return train.class_ids[best]
    best = np.empty(Q.shape[0], dtype=int)
    for qi in range(Q.shape[0]):
        diff = X - Q[qi]
        if metric == "l1":
            d = np.abs(diff).sum(axis=1)
        else:
            d = np.sqrt((diff**2).sum(axis=1))
        best[qi] = int(np.argmin(d))
    return train.class_ids[best]


def nn_classify(train: FeatureSet, query, metric: str = "l2") -> int:
    """Single-query wrapper around nn_classify_batch."""
    q = np.asarray(query, dtype=float)
    if q.ndim != 1:
        raise ValidationError(f"query must be a vector, got shape {q.shape}")
    return int(nn_classify_batch(train, q, metric)[0])


# ---------------------------------------------------------------------------
# Accuracy bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class Evaluation:
    overall: float
    per_class: dict[int, float]
    confusion: np.ndarray  # rows = truth, columns = prediction
    classes: np.ndarray


def evaluate_accuracy(predictions, truth) -> Evaluation:
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(truth, dtype=int)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise ValidationError(
            f"predictions {pred.shape} and truth {true.shape} must be equal-length nonempty vectors"
        )
    classes = np.unique(np.concatenate([true, pred]))
    index = {int(c): i for i, c in enumerate(classes)}
    confusion = np.zeros((classes.size, classes.size), dtype=int)
    for p, t in zip(pred, true):
        confusion[index[int(t)], index[int(p)]] += 1
    per_class: dict[int, float] = {}
    for c in classes:
        mask = true == c
        if mask.any():
            per_class[int(c)] = float((pred[mask] == c).mean())
    overall = float((pred == true).mean())
    return Evaluation(overall=overall, per_class=per_class, confusion=confusion, classes=classes)


# ---------------------------------------------------------------------------
# RBF SVM (one-vs-one, SMO)
# ---------------------------------------------------------------------------

@dataclass
class _BinarySvm:
    class_lo: int
    class_hi: int
    support_vectors: np.ndarray  # scaled
    dual_coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float


@dataclass
class SvmModel:
    """One-vs-one RBF machine with the feature scaling baked in.

    scale_min/scale_span map raw features to [-1, 1]; constant training
    dimensions get span 0 and map to 0.
    """

    classes: np.ndarray
    machines: list[_BinarySvm]
    C: float
    gamma: float
    scale_min: np.ndarray
    scale_span: np.ndarray
    feature_kind: str
    cv_accuracy: float
    kkt_violation: float
    warnings: list[str] = field(default_factory=list)

    def scale(self, X: np.ndarray) -> np.ndarray:
        span = self.scale_span
        out = np.zeros_like(X, dtype=float)
        nz = span > 0
        out[:, nz] = 2.0 * (X[:, nz] - self.scale_min[nz]) / span[nz] - 1.0
        return out


def _rbf(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    aa = (A**2).sum(axis=1)[:, None]
    bb = (B**2).sum(axis=1)[None, :]
    sq = np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)
    return np.exp(-gamma * sq)


def _smo(K: np.ndarray, y: np.ndarray, C: float, rng, tol: float = 1e-3,
         max_passes: int = 8, max_sweeps: int = 2000) -> tuple[np.ndarray, float]:
    """Sequential minimal optimization on a precomputed kernel matrix.

    Returns (alpha, bias). Terminates after max_passes consecutive sweeps
    without an update (every point then satisfies its KKT condition within
    tol) or after max_sweeps sweeps outright.
    """
    n = y.size
    alpha = np.zeros(n)
    b = 0.0
    u = np.zeros(n)  # u[i] = sum_j alpha_j y_j K[j, i]
    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < max_sweeps:
        changed = 0
        for i in range(n):
            Ei = u[i] + b - y[i]
            if (y[i] * Ei < -tol and alpha[i] < C) or (y[i] * Ei > tol and alpha[i] > 0):
                j = int(rng.integers(n - 1))
                if j >= i:
                    j += 1
                Ej = u[j] + b - y[j]
                ai_old, aj_old = alpha[i], alpha[j]
                if y[i] != y[j]:
                    lo, hi = max(0.0, aj_old - ai_old), min(C, C + aj_old - ai_old)
                else:
                    lo, hi = max(0.0, ai_old + aj_old - C), min(C, ai_old + aj_old)
                if lo >= hi:
                    continue
                eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
                if eta >= 0:
                    continue
                aj = np.clip(aj_old - y[j] * (Ei - Ej) / eta, lo, hi)
                if abs(aj - aj_old) < 1e-12:
                    continue
                ai = ai_old + y[i] * y[j] * (aj_old - aj)
                alpha[i], alpha[j] = ai, aj
                u += y[i] * (ai - ai_old) * K[i] + y[j] * (aj - aj_old) * K[j]
                b1 = b - Ei - y[i] * (ai - ai_old) * K[i, i] - y[j] * (aj - aj_old) * K[i, j]
                b2 = b - Ej - y[i] * (ai - ai_old) * K[i, j] - y[j] * (aj - aj_old) * K[j, j]
                if 0.0 < ai < C:
                    b = b1
                elif 0.0 < aj < C:
                    b = b2
                else:
                    b = 0.5 * (b1 + b2)
                changed += 1
        sweeps += 1
        passes = passes + 1 if changed == 0 else 0
    return alpha, b


def _kkt_violation(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, b: float, C: float) -> float:
    """Worst slack in the KKT conditions over all training points."""
    f = K @ (alpha * y) + b
    m = y * f
    worst = 0.0
    bound_tol = 1e-9 * max(C, 1.0)
    for i in range(y.size):
        if alpha[i] <= bound_tol:
            worst = max(worst, 1.0 - m[i])
        elif alpha[i] >= C - bound_tol:
            worst = max(worst, m[i] - 1.0)
        else:
            worst = max(worst, abs(m[i] - 1.0))
    return float(worst)


def _fit_pairs(Xs, y, classes, C, gamma, rng):
    machines = []
    worst_kkt = 0.0
    for a_idx in range(classes.size):
        for b_idx in range(a_idx + 1, classes.size):
            lo, hi = int(classes[a_idx]), int(classes[b_idx])
            mask = (y == lo) | (y == hi)
            Xp = Xs[mask]
            yp = np.where(y[mask] == lo, -1.0, 1.0)
            K = _rbf(Xp, Xp, gamma)
            alpha, bias = _smo(K, yp, C, rng)
            worst_kkt = max(worst_kkt, _kkt_violation(K, yp, alpha, bias, C))
            sv = alpha > 1e-12
            machines.append(
                _BinarySvm(
                    class_lo=lo,
                    class_hi=hi,
                    support_vectors=Xp[sv],
                    dual_coef=(alpha * yp)[sv],
                    bias=float(bias),
                )
            )
    return machines, worst_kkt


def _predict_scaled(machines, classes, Xs: np.ndarray, gamma: float) -> np.ndarray:
    votes = np.zeros((Xs.shape[0], classes.size), dtype=int)
    pos = {int(c): i for i, c in enumerate(classes)}
    for m in machines:
        if m.support_vectors.shape[0]:
            f = _rbf(Xs, m.support_vectors, gamma) @ m.dual_coef + m.bias
        else:
            f = np.full(Xs.shape[0], m.bias)
        winner = np.where(f > 0, pos[m.class_hi], pos[m.class_lo])
        votes[np.arange(Xs.shape[0]), winner] += 1
    return classes[np.argmax(votes, axis=1)]


def _stratified_folds(y: np.ndarray, folds: int, rng) -> np.ndarray:
    """Fold assignment per sample: per class, shuffle then deal round-robin."""
    assign = np.empty(y.size, dtype=int)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = np.arange(idx.size) % folds
    return assign


def svm_train(train: FeatureSet, grid=None, folds: int = 5, seed: int = 0) -> SvmModel:
    """Grid-searched one-vs-one RBF SVM.

    The (C, gamma) pair with the best pooled cross-validation accuracy wins;
    ties go to the smaller C, then the smaller gamma. folds=1 scores by
    resubstitution. Folds are fixed once per seed and reused for every grid
    point. Deterministic given the seed.
    """
    y = train.class_ids
    classes = np.unique(y)
    if classes.size < 2:
        raise ValidationError("svm_train needs at least 2 classes")
    counts = np.array([(y == c).sum() for c in classes])
    if folds < 1:
        raise ValidationError(f"folds must be >= 1, got {folds}")
    if folds > 1 and np.any(counts < folds):
        short = int(classes[np.argmin(counts)])
        raise ValidationError(
            f"class {short} has {counts.min()} samples, fewer than {folds} folds"
        )
    grid = grid or {}
    c_values = sorted(float(v) for v in grid.get("C", DEFAULT_C_GRID))
    g_values = sorted(float(v) for v in grid.get("gamma", DEFAULT_GAMMA_GRID))
    if not c_values or not g_values:
        raise ValidationError("empty (C, gamma) grid")

    X = train.vectors
    scale_min = X.min(axis=0)
    scale_span = X.max(axis=0) - scale_min
    span = np.where(scale_span > 0, scale_span, 1.0)
    Xs = np.where(scale_span > 0, 2.0 * (X - scale_min) / span - 1.0, 0.0)

    rng = np.random.default_rng(seed)
    warn_msgs: list[str] = []
    if folds > 1:
        assign = _stratified_folds(y, folds, rng)
    else:
        assign = np.zeros(y.size, dtype=int)

    best = (-1.0, None, None)
    for C in c_values:
        for gamma in g_values:
            correct = 0
            total = 0
            fold_rng = np.random.default_rng(seed + 1)
            for f in range(folds):
                if folds > 1:
                    tr = assign != f
                    va = ~tr
                else:
                    tr = np.ones(y.size, dtype=bool)
                    va = tr
                if np.unique(y[tr]).size < 2:
                    msg = f"fold {f} has a single training class; skipped"
                    if msg not in warn_msgs:
                        warn_msgs.append(msg)
                    continue
                machines, _ = _fit_pairs(Xs[tr], y[tr], np.unique(y[tr]), C, gamma, fold_rng)
                pred = _predict_scaled(machines, np.unique(y[tr]), Xs[va], gamma)
                correct += int((pred == y[va]).sum())
                total += int(va.sum())
            acc = correct / total if total else 0.0
            if acc > best[0]:
                best = (acc, C, gamma)
    cv_acc, C, gamma = best
    if C is None:
        raise ValidationError("every cross-validation fold was degenerate")

    final_rng = np.random.default_rng(seed + 2)
    machines, worst_kkt = _fit_pairs(Xs, y, classes, C, gamma, final_rng)
    for msg in warn_msgs:
        _warnings.warn(msg, stacklevel=2)
    return SvmModel(
        classes=classes,
        machines=machines,
        C=float(C),
        gamma=float(gamma),
        scale_min=scale_min,
        scale_span=scale_span,
        feature_kind=train.feature_kind,
        cv_accuracy=float(cv_acc),
        kkt_violation=float(worst_kkt),
        warnings=warn_msgs,
    )


def svm_predict_batch(model: SvmModel, queries) -> np.ndarray:
    Q = _query_matrix(queries, model.scale_min.size)
    Xs = model.scale(Q)
    return _predict_scaled(model.machines, model.classes, Xs, model.gamma)


def svm_predict(model: SvmModel, query) -> int:
    q = np.asarray(query, dtype=float)
    if q.ndim != 1:
        raise ValidationError(f"query must be a vector, got shape {q.shape}")
    return int(svm_predict_batch(model, q)[0])


def save_svm(model: SvmModel, path) -> None:
    doc = {
        "version": 1,
        "model_kind": "svm",
        "feature_kind": model.feature_kind,
        "C": model.C,
        "gamma": model.gamma,
        "cv_accuracy": model.cv_accuracy,
        "kkt_violation": model.kkt_violation,
        "classes": model.classes.tolist(),
        "scale_min": model.scale_min.tolist(),
        "scale_span": model.scale_span.tolist(),
        "warnings": model.warnings,
        "machines": [
            {
                "class_lo": m.class_lo,
                "class_hi": m.class_hi,
                "support_vectors": m.support_vectors.tolist(),
                "dual_coef": m.dual_coef.tolist(),
                "bias": m.bias,
            }
            for m in model.machines
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_svm(path) -> SvmModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read model: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not a model file: {exc}") from exc
    if doc.get("model_kind") != "svm":
        raise ValidationError(f"{path}: not an svm model file")
    machines = [
        _BinarySvm(
            class_lo=m["class_lo"],
            class_hi=m["class_hi"],
            support_vectors=np.array(m["support_vectors"], dtype=float).reshape(
                len(m["dual_coef"]), -1
            )
            if m["dual_coef"]
            else np.zeros((0, len(doc["scale_min"]))),
            dual_coef=np.array(m["dual_coef"], dtype=float),
            bias=float(m["bias"]),
        )
        for m in doc["machines"]
    ]
    return SvmModel(
        classes=np.array(doc["classes"], dtype=int),
        machines=machines,
        C=float(doc["C"]),
        gamma=float(doc["gamma"]),
        scale_min=np.array(doc["scale_min"], dtype=float),
        scale_span=np.array(doc["scale_span"], dtype=float),
        feature_kind=doc["feature_kind"],
        cv_accuracy=float(doc["cv_accuracy"]),
        kkt_violation=float(doc["kkt_violation"]),
        warnings=list(doc.get("warnings", [])),
    )
