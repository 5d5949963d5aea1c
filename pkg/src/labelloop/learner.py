"""Multi-class linear classifier: L2-regularized logistic regression.

Training mirrors a LIBLINEAR-style setup: classes are balanced by random
under-sampling, features are scaled to [-1, 1] with parameters derived from
the training set, a constant bias feature (0.1) is appended, and one
one-vs-rest weight vector is learned per class by minimizing

    F(w) = 0.5 ||w||^2 + C * sum_i log(1 + exp(-y_i w.x_i)),   y_i in {-1, +1}

with a deterministic trust-region Newton minimizer (gradient-norm tolerance
1e-4, at most 1000 iterations). Per-class sigmoid scores are renormalized to
sum to 1, so the argmax doubles as a class probability.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.optimize
from scipy.special import expit

from .errors import DegenerateData, DimensionMismatch, NonFinite

DEFAULT_SEED = 1234

_MAGIC = b"CMLM"
_VERSION = 1

# keeps renormalized probabilities inside the open interval (0, 1)
_SCORE_CLIP = 1e-12


@dataclass(frozen=True)
class LearnerConfig:
    regularization_c: float = 1.0
    bias_value: float = 0.1
    grad_tol: float = 1e-4
    max_iter: int = 1000
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class LabeledFrameSet:
    """(feature row, class id) pairs ready for training."""

    rows: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    class_ids: tuple[int, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if rows.shape[0] != labels.shape[0]:
            raise ValueError("rows and labels must have the same length")
        present = set(labels.tolist())
        if not present <= set(self.class_ids):
            raise ValueError(f"labels {present - set(self.class_ids)} missing from class_ids")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_ids", tuple(self.class_ids))

    @classmethod
    def from_arrays(cls, rows, labels, scheme=None) -> "LabeledFrameSet":
        """Build a frame set; class order follows the scheme, rest class last."""
        labels = np.asarray(labels, dtype=np.int64)
        present = set(labels.tolist())
        if scheme is not None:
            ordered = [cid for cid in scheme.class_ids if cid in present]
            if scheme.rest_class_id in present:
                ordered.append(scheme.rest_class_id)
        else:
            ordered = sorted(present)
        return cls(rows=rows, labels=labels, class_ids=tuple(ordered))

    def __len__(self) -> int:
        return self.rows.shape[0]

    def class_counts(self) -> dict[int, int]:
        return {cid: int(np.sum(self.labels == cid)) for cid in self.class_ids}


@dataclass(frozen=True)
class ScalerParams:
    minimum: np.ndarray = field(repr=False)
    maximum: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class LinearModel:
    """Per-class weights (last column is the bias weight) plus scaling state."""

    weights: np.ndarray = field(repr=False)
    bias_value: float
    scaler: ScalerParams
    class_ids: tuple[int, ...]
    regularization_c: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise NonFinite("model weights must be finite")
        if self.weights.shape[0] != len(self.class_ids) or len(self.class_ids) < 2:
            raise ValueError("one weight row per class id, at least two classes")

    @property
    def dim(self) -> int:
        """Feature dimension before the bias append."""
        return self.weights.shape[1] - 1


def balance_undersample(data: LabeledFrameSet, seed: int) -> LabeledFrameSet:
    """Randomly drop rows so every class keeps the minority-class count.

    Selection is uniform per class under the given seed; the relative order
    of surviving rows is preserved.
    """
    counts = data.class_counts()
    if min(counts.values(), default=0) < 1:
        raise DegenerateData(f"every class needs at least one sample, got {counts}")
    floor = min(counts.values())
    rng = np.random.default_rng(seed)
    keep = []
    for cid in data.class_ids:
        idx = np.flatnonzero(data.labels == cid)
        keep.append(rng.choice(idx, size=floor, replace=False))
    keep = np.sort(np.concatenate(keep))
    return replace(data, rows=data.rows[keep], labels=data.labels[keep])


def fit_scaler(rows: np.ndarray) -> ScalerParams:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        raise ValueError("cannot fit a scaler on zero rows")
    return ScalerParams(minimum=rows.min(axis=0), maximum=rows.max(axis=0))


def apply_scaler(params: ScalerParams, rows: np.ndarray) -> np.ndarray:
    """Map each dimension to [-1, 1] via the stored train min/max (no clipping).

    Dimensions that were constant on the training data map to 0.
    """
    rows = np.asarray(rows, dtype=np.float64)
    span = params.maximum - params.minimum
    flat = span == 0
    out = 2.0 * (rows - params.minimum) / np.where(flat, 1.0, span) - 1.0
    out[:, flat] = 0.0
    return out


def loss_gradient(weights: np.ndarray, rows: np.ndarray, targets: np.ndarray,
                  c: float) -> tuple[float, np.ndarray]:
    """Objective value and gradient of the per-class training problem.

    targets are +-1. Returns (F(w), grad F(w)) for
    F(w) = 0.5 ||w||^2 + c * sum_i log(1 + exp(-y_i w.x_i)).
    """
    w = np.asarray(weights, dtype=np.float64)
    z = targets * (rows @ w)
    loss = 0.5 * float(w @ w) + c * float(np.logaddexp(0.0, -z).sum())
    grad = w - c * (rows.T @ (targets * expit(-z)))
    return loss, grad


def fit_binary(rows: np.ndarray, targets: np.ndarray, config: LearnerConfig,
               callback=None) -> np.ndarray:
    """Minimize the regularized logistic loss for one one-vs-rest problem."""
    c = config.regularization_c
    cache = {"key": None, "d": None}

    def hessp(w, vector, *_args):
        # the inner CG loop asks for many products at the same iterate
        key = w.tobytes()
        if cache["key"] != key:
            z = targets * (rows @ w)
            cache["key"] = key
            cache["d"] = expit(z) * expit(-z)
        return vector + c * (rows.T @ (cache["d"] * (rows @ vector)))

    result = scipy.optimize.minimize(
        loss_gradient,
        np.zeros(rows.shape[1]),
        args=(rows, targets, c),
        jac=True,
        hessp=hessp,
        method="trust-ncg",
        callback=callback,
        options={"gtol": config.grad_tol, "maxiter": config.max_iter},
    )
    return result.x


def train_linear(data: LabeledFrameSet, config: LearnerConfig = LearnerConfig()) -> LinearModel:
    """Balance, scale, append the bias feature, and fit one-vs-rest weights.

    Raises DegenerateData when fewer than two classes survive balancing and
    NonFinite when features overflow.
    """
    if len(data.class_ids) < 2:
        raise DegenerateData(f"need at least 2 classes, got {list(data.class_ids)}")
    if not np.all(np.isfinite(data.rows)):
        raise NonFinite("training features contain inf or NaN")

    balanced = balance_undersample(data, config.seed)
    scaler = fit_scaler(balanced.rows)
    scaled = apply_scaler(scaler, balanced.rows)
    design = np.hstack([scaled, np.full((scaled.shape[0], 1), config.bias_value)])

    weights = np.empty((len(data.class_ids), design.shape[1]))
    for row, cid in enumerate(data.class_ids):
        targets = np.where(balanced.labels == cid, 1.0, -1.0)
        weights[row] = fit_binary(design, targets, config)
    return LinearModel(
        weights=weights,
        bias_value=config.bias_value,
        scaler=scaler,
        class_ids=data.class_ids,
        regularization_c=config.regularization_c,
    )


def decision_scores(model: LinearModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.dim:
        raise DimensionMismatch(f"expected dim {model.dim}, got {rows.shape}")
    scaled = apply_scaler(model.scaler, rows)
    design = np.hstack([scaled, np.full((scaled.shape[0], 1), model.bias_value)])
    return design @ model.weights.T


def predict_proba(model: LinearModel, rows: np.ndarray) -> np.ndarray:
    """Per-row class probabilities: one-vs-rest sigmoids renormalized to sum 1."""
    scores = np.clip(expit(decision_scores(model, rows)), _SCORE_CLIP, 1.0 - _SCORE_CLIP)
    return scores / scores.sum(axis=1, keepdims=True)


def predict_labels(model: LinearModel, rows: np.ndarray) -> np.ndarray:
    probs = predict_proba(model, rows)
    return np.asarray(model.class_ids, dtype=np.int64)[probs.argmax(axis=1)]


def save_model(model: LinearModel, path) -> None:
    """Versioned binary model file; round-trips bit-exactly."""
    k, cols = model.weights.shape
    dim = cols - 1
    parts = [
        _MAGIC,
        struct.pack("<IIIdd", _VERSION, k, dim, model.bias_value, model.regularization_c),
        np.asarray(model.class_ids, dtype="<i8").tobytes(),
        model.scaler.minimum.astype("<f8").tobytes(),
        model.scaler.maximum.astype("<f8").tobytes(),
        model.weights.astype("<f8").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def load_model(path) -> LinearModel:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a model file")
    version, k, dim, bias, c = struct.unpack_from("<IIIdd", raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unknown model version {version}")
    offset = 4 + struct.calcsize("<IIIdd")
    class_ids = np.frombuffer(raw, dtype="<i8", count=k, offset=offset)
    offset += 8 * k
    minimum = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset)
    offset += 8 * dim
    maximum = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset)
    offset += 8 * dim
    weights = np.frombuffer(raw, dtype="<f8", count=k * (dim + 1), offset=offset)
    return LinearModel(
        weights=weights.reshape(k, dim + 1).copy(),
        bias_value=bias,
        scaler=ScalerParams(minimum=minimum.copy(), maximum=maximum.copy()),
        class_ids=tuple(int(cid) for cid in class_ids),
        regularization_c=c,
    )
