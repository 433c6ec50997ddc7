"""Benchmark classifiers: a linear pseudo-inverse model and a single-hidden-
layer network trained by online pseudo-inverse (recursive least squares)
updates.

The model keeps the inverse-correlation matrix Theta = (ridge*I + sum h h^T)^-1
alongside the output weights W, so after any prefix of the sample stream W is
the exact ridge least-squares solution for the samples seen. Per sample, with
one-hot target y:

    k     = Theta h / (1 + h^T Theta h)
    W    <- W + (y - W h) k^T
    Theta <- Theta - k (h^T Theta)

Hidden-layer weights are random, fixed at init, and never trained; only W
learns. Training is order-dependent in floating point, so streams are
sequential by contract; evaluation is batch.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BenchMismatchError, FormatError, NumericError

DEFAULT_RIDGE = 1e-3
SYMMETRIZE_EVERY = 10_000
TRAIN_ORDER_SALT = 0x5EED0100

KIND_LINEAR = "identity_with_bias"
KIND_PROJECTION = "random_projection"

INPUT_DIM = 784


def _logistic(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


ACTIVATIONS = {"logistic": _logistic}


@dataclass
class FeatureMap:
    """Input transform: raw pixels with a bias term, or a fixed random projection."""

    kind: str
    input_dim: int
    hidden_dim: int
    input_weights: np.ndarray | None  # (H, input_dim + 1), immutable after init
    activation: str

    @property
    def dim(self) -> int:
        return self.hidden_dim if self.kind == KIND_PROJECTION else self.input_dim + 1


@dataclass
class PseudoInverseModel:
    """Output weights plus inverse-correlation state for online least squares."""

    feature: FeatureMap
    W: np.ndarray  # (C, D)
    Theta: np.ndarray  # (D, D)
    ridge: float
    samples_seen: int
    seed: int
    target_low: float = 0.0  # one-hot off-value; {0,1} default, {-1,1} optional

    @property
    def class_count(self) -> int:
        return int(self.W.shape[0])


def init_model(
    hidden: int,
    classes: int,
    seed: int,
    ridge: float = DEFAULT_RIDGE,
    targets: str = "zero_one",
) -> PseudoInverseModel:
    """Fresh model: W = 0, Theta = (1/ridge) I, input weights uniform[-1, 1].

    ``hidden`` = 0 builds the linear model (feature dim 785: scaled pixels
    plus bias); ``hidden`` = H builds the random-projection network with
    feature dim H. Equal seeds give identical input weights.
    """
    if hidden < 0:
        raise ValueError(f"hidden size must be >= 0, got {hidden}")
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if ridge <= 0:
        raise ValueError(f"ridge must be positive, got {ridge}")
    if targets not in ("zero_one", "plus_minus"):
        raise ValueError(f"targets must be zero_one or plus_minus, got {targets!r}")
    if hidden == 0:
        feature = FeatureMap(KIND_LINEAR, INPUT_DIM, 0, None, "logistic")
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        weights = rng.uniform(-1.0, 1.0, size=(hidden, INPUT_DIM + 1))
        feature = FeatureMap(KIND_PROJECTION, INPUT_DIM, hidden, weights, "logistic")
    dim = feature.dim
    return PseudoInverseModel(
        feature=feature,
        W=np.zeros((classes, dim), dtype=np.float64),
        Theta=np.eye(dim, dtype=np.float64) / ridge,
        ridge=ridge,
        samples_seen=0,
        seed=seed,
        target_low=-1.0 if targets == "plus_minus" else 0.0,
    )


def _augment(images: np.ndarray) -> np.ndarray:
    """Pixels scaled to [0, 1] with a trailing bias 1, as (N, 785)."""
    flat = np.asarray(images).reshape(len(images), -1).astype(np.float64) / 255.0
    if flat.shape[1] != INPUT_DIM:
        raise BenchMismatchError(f"expected {INPUT_DIM}-pixel images, got {flat.shape[1]}")
    return np.hstack([flat, np.ones((len(flat), 1), dtype=np.float64)])


def features_batch(model: PseudoInverseModel, images: np.ndarray) -> np.ndarray:
    """Feature vectors for a batch of images, shape (N, D)."""
    aug = _augment(images)
    if model.feature.kind == KIND_LINEAR:
        return aug
    squash = ACTIVATIONS[model.feature.activation]
    return squash(aug @ model.feature.input_weights.T)


def features(model: PseudoInverseModel, image: np.ndarray) -> np.ndarray:
    """Feature vector for one image, shape (D,)."""
    return features_batch(model, np.asarray(image).reshape(1, -1))[0]


def train_sample(model: PseudoInverseModel, h: np.ndarray, label: int) -> PseudoInverseModel:
    """One rank-one recursive least-squares update; mutates and returns the model."""
    h = np.asarray(h, dtype=np.float64)
    if not np.isfinite(h).all():
        raise NumericError("non-finite feature values in training sample")
    if not 0 <= label < model.class_count:
        raise BenchMismatchError(f"label {label} outside [0, {model.class_count})")
    y = np.full(model.class_count, model.target_low, dtype=np.float64)
    y[label] = 1.0

    u = model.Theta @ h
    k = u / (1.0 + h @ u)
    residual = y - model.W @ h
    model.W += np.outer(residual, k)
    v = model.Theta.T @ h  # row vector h^T Theta, before Theta changes
    model.Theta -= np.outer(k, v)
    model.samples_seen += 1
    if model.samples_seen % SYMMETRIZE_EVERY == 0:
        # joint propagation drifts from symmetry over long streams
        model.Theta = 0.5 * (model.Theta + model.Theta.T)
    return model


def train_stream(
    model: PseudoInverseModel,
    images: np.ndarray,
    labels: np.ndarray,
    order: np.ndarray | None = None,
) -> PseudoInverseModel:
    """Train over a sample stream in the given order (default: file order)."""
    labels = np.asarray(labels)
    if order is None:
        order = np.arange(len(labels))
    for i in order:
        h = features(model, images[i])
        train_sample(model, h, int(labels[i]))
    return model


def predict_batch(model: PseudoInverseModel, images: np.ndarray) -> np.ndarray:
    """Argmax class per image; ties break to the lowest class index."""
    scores = features_batch(model, images) @ model.W.T
    return np.argmax(scores, axis=1)


def predict(model: PseudoInverseModel, image: np.ndarray) -> int:
    return int(predict_batch(model, np.asarray(image).reshape(1, -1))[0])


@dataclass
class EvalReport:
    """Accuracy, per-class accuracy, and confusion counts for one or more trials."""

    accuracy: float
    per_class_accuracy: np.ndarray  # (C,)
    confusion: np.ndarray  # (C, C) int64, rows = true class
    trials: list[float] = field(default_factory=list)
    mean: float = 0.0
    stddev: float = 0.0


def _per_class(confusion: np.ndarray) -> np.ndarray:
    row_sums = confusion.sum(axis=1)
    diag = np.diag(confusion).astype(np.float64)
    return np.divide(diag, row_sums, out=np.zeros_like(diag), where=row_sums > 0)


def evaluate(
    model: PseudoInverseModel,
    images: np.ndarray,
    labels: np.ndarray,
    batch: int = 4096,
) -> EvalReport:
    """Full-partition evaluation: accuracy and C x C confusion counts."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise BenchMismatchError("cannot evaluate on an empty partition")
    if labels.max() >= model.class_count:
        raise BenchMismatchError(
            f"label {labels.max()} outside the model's {model.class_count} classes"
        )
    c = model.class_count
    confusion = np.zeros((c, c), dtype=np.int64)
    for start in range(0, len(labels), batch):
        stop = min(start + batch, len(labels))
        preds = predict_batch(model, images[start:stop])
        np.add.at(confusion, (labels[start:stop], preds), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return EvalReport(
        accuracy=accuracy,
        per_class_accuracy=_per_class(confusion),
        confusion=confusion,
        trials=[accuracy],
        mean=accuracy,
        stddev=0.0,
    )


def aggregate_reports(reports: list[EvalReport]) -> EvalReport:
    """Combine per-trial reports: summed confusion, mean and stddev of accuracy."""
    if not reports:
        raise ValueError("no reports to aggregate")
    accs = [r.accuracy for r in reports]
    confusion = np.sum([r.confusion for r in reports], axis=0)
    mean = float(np.mean(accs))
    stddev = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return EvalReport(
        accuracy=mean,
        per_class_accuracy=_per_class(confusion),
        confusion=confusion,
        trials=accs,
        mean=mean,
        stddev=stddev,
    )


def top_confusions(confusion: np.ndarray, k: int = 5) -> list[tuple[int, int, int]]:
    """The k most-confused unordered class pairs, as (i, j, count), i < j."""
    c = confusion.shape[0]
    pairs = []
    for i in range(c):
        for j in range(i + 1, c):
            pairs.append((int(confusion[i, j] + confusion[j, i]), i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [(i, j, n) for n, i, j in pairs[:k]]


def run_trials(
    train_images: np.ndarray,
    train_labels: np.ndarray,
    test_images: np.ndarray,
    test_labels: np.ndarray,
    class_count: int,
    hidden_sizes: list[int],
    trials: int,
    master_seed: int,
    ridge: float = DEFAULT_RIDGE,
) -> list[dict]:
    """Train/evaluate over hidden sizes and trials with one fixed training order.

    The training order is drawn once from the master seed and reused for every
    size and trial; only the input weights differ between trials. Hidden size
    0 is the linear model and always yields exactly one result.
    """
    order = np.random.Generator(np.random.PCG64(master_seed ^ TRAIN_ORDER_SALT)).permutation(
        len(train_labels)
    )
    records = []
    for hidden in hidden_sizes:
        n_trials = 1 if hidden == 0 else trials
        for trial in range(n_trials):
            seed = master_seed if hidden == 0 else master_seed + 1 + trial
            model = init_model(hidden, class_count, seed, ridge=ridge)
            started = time.perf_counter()
            train_stream(model, train_images, train_labels, order)
            report = evaluate(model, test_images, test_labels)
            records.append(
                {
                    "hidden": hidden,
                    "trial": trial,
                    "seed": seed,
                    "report": report,
                    "seconds": time.perf_counter() - started,
                }
            )
    return records


MODEL_MAGIC = b"OPIM"
MODEL_VERSION = 1
_KIND_IDS = {KIND_LINEAR: 0, KIND_PROJECTION: 1}
_KIND_NAMES = {v: k for k, v in _KIND_IDS.items()}


def save_model(model: PseudoInverseModel, path) -> None:
    """Serialize to the versioned binary blob (little-endian f64 matrices)."""
    header = struct.pack(
        "<4sIBBHIIIQQdd",
        MODEL_MAGIC,
        MODEL_VERSION,
        _KIND_IDS[model.feature.kind],
        0 if model.target_low == 0.0 else 1,
        0,
        model.class_count,
        model.feature.dim,
        model.feature.hidden_dim,
        model.seed & 0xFFFFFFFFFFFFFFFF,
        model.samples_seen,
        model.ridge,
        model.target_low,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        if model.feature.input_weights is not None:
            fh.write(np.ascontiguousarray(model.feature.input_weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.W, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.Theta, dtype="<f8").tobytes())


def load_model(path) -> PseudoInverseModel:
    """Read back a model written by save_model."""
    header_size = struct.calcsize("<4sIBBHIIIQQdd")
    with open(path, "rb") as fh:
        header = fh.read(header_size)
        if len(header) != header_size:
            raise FormatError("truncated model header")
        magic, version, kind_id, target_id, _, classes, dim, hidden, seed, seen, ridge, target_low = struct.unpack(
            "<4sIBBHIIIQQdd", header
        )
        if magic != MODEL_MAGIC:
            raise FormatError(f"bad model magic {magic!r}")
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported model version {version}")
        kind = _KIND_NAMES.get(kind_id)
        if kind is None:
            raise FormatError(f"unknown feature kind id {kind_id}")

        def read_array(shape) -> np.ndarray:
            count = int(np.prod(shape))
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise FormatError("truncated model payload")
            return np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64)

        if kind == KIND_PROJECTION:
            weights = read_array((hidden, INPUT_DIM + 1))
        else:
            weights = None
        W = read_array((classes, dim))
        Theta = read_array((dim, dim))
    feature = FeatureMap(kind, INPUT_DIM, hidden, weights, "logistic")
    return PseudoInverseModel(
        feature=feature,
        W=W,
        Theta=Theta,
        ridge=ridge,
        samples_seen=seen,
        seed=seed,
        target_low=target_low,
    )
