"""Near/far proximity classification from anonymized RSSI windows.

Two classifiers share one feature extractor:

* a transparent baseline that thresholds the mean |CAD - GD| level
  difference, and
* a from-scratch logistic regression trained by full-batch gradient
  descent on log-loss, with feature standardization stored inside the
  model so prediction is self-contained.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import TrainingError, ValidationError
from .model import Label, TrainingRecord

MODEL_FORMAT_VERSION = 1

FEATURE_ORDER = ("mean_cad", "mean_gd", "mean_abs_diff", "std_diff", "min_diff", "max_diff")


@dataclass(frozen=True)
class FeatureVector:
    """Summary of one window: per-device mean levels and statistics of the
    per-pair absolute level differences."""

    mean_cad: float
    mean_gd: float
    mean_abs_diff: float
    std_diff: float
    min_diff: float
    max_diff: float

    def __post_init__(self) -> None:
        if not (self.min_diff <= self.mean_abs_diff <= self.max_diff):
            raise ValidationError("diff statistics out of order")
        if self.std_diff < 0:
            raise ValidationError("std_diff cannot be negative")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_ORDER], dtype=float)


def extract_features(values: Sequence[int]) -> FeatureVector:
    """Features over the X interleaved pairs of a window.

    Even indices are the CAD stream, odd indices the GD stream; diffs are
    the per-pair absolute differences |even_i - odd_i|, and std_diff is
    their population standard deviation.
    """
    if len(values) < 2 or len(values) % 2 != 0:
        raise ValidationError(
            f"need an even number (>= 2) of interleaved values, got {len(values)}"
        )
    arr = np.asarray(values, dtype=float)
    cad = arr[0::2]
    gd = arr[1::2]
    diffs = np.abs(cad - gd)
    return FeatureVector(
        mean_cad=float(cad.mean()),
        mean_gd=float(gd.mean()),
        mean_abs_diff=float(diffs.mean()),
        std_diff=float(diffs.std()),
        min_diff=float(diffs.min()),
        max_diff=float(diffs.max()),
    )


def threshold_classify(features: FeatureVector, near_max_diff_db: float) -> Label:
    """Baseline rule: near iff the mean absolute level difference does not
    exceed the threshold. Ties classify near."""
    if not near_max_diff_db > 0:
        raise ValidationError("threshold must be positive")
    return Label(near=features.mean_abs_diff <= near_max_diff_db)


# ---------------------------------------------------------------------------
# logistic model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticModel:
    """Weights over standardized features; standardization parameters are
    part of the model so a saved model predicts without its training set."""

    weights: tuple[float, ...]
    bias: float
    feature_means: tuple[float, ...]
    feature_scales: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(FEATURE_ORDER)
        if not (len(self.weights) == len(self.feature_means) == len(self.feature_scales) == n):
            raise ValidationError(f"model must carry {n} weights/means/scales")
        if any(s <= 0 for s in self.feature_scales):
            raise ValidationError("feature scales must all be positive")

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (features - np.asarray(self.feature_means)) / np.asarray(self.feature_scales)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # numerically stable in both tails
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss_and_gradient(
    weights: np.ndarray,
    bias: float,
    features_std: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, np.ndarray, float]:
    """Mean log-loss and its analytic gradient over a standardized batch.

    Returns (loss, d_loss/d_weights, d_loss/d_bias).
    """
    z = features_std @ weights + bias
    p = _sigmoid(z)
    eps = 1e-12
    loss = -float(np.mean(labels * np.log(p + eps) + (1 - labels) * np.log(1 - p + eps)))
    residual = p - labels
    grad_w = features_std.T @ residual / len(labels)
    grad_b = float(residual.mean())
    return loss, grad_w, grad_b


def _feature_matrix(dataset: Sequence[TrainingRecord]) -> tuple[np.ndarray, np.ndarray]:
    if not dataset:
        raise ValidationError("dataset is empty")
    width = len(dataset[0].rssi_values)
    rows = []
    labels = []
    for record in dataset:
        if len(record.rssi_values) != width:
            raise ValidationError("dataset mixes window lengths")
        rows.append(extract_features(record.rssi_values).as_array())
        labels.append(1.0 if record.label.near else 0.0)
    return np.vstack(rows), np.array(labels)


def train_logistic(
    dataset: Sequence[TrainingRecord],
    epochs: int = 500,
    learning_rate: float = 0.5,
    seed: int = 0,
) -> LogisticModel:
    """Fit the logistic model by full-batch gradient descent on log-loss.

    Features are standardized by the training set's mean and population
    standard deviation (zero-variance features get scale 1); those
    parameters are frozen into the returned model. Deterministic for a
    given (dataset, epochs, learning_rate, seed).
    """
    if epochs < 1:
        raise ValidationError("epochs must be >= 1")
    if not learning_rate > 0:
        raise ValidationError("learning rate must be positive")
    features, labels = _feature_matrix(dataset)
    if labels.min() == labels.max():
        raise TrainingError("dataset contains a single class; need both near and far")

    means = features.mean(axis=0)
    scales = features.std(axis=0)
    scales[scales < 1e-12] = 1.0
    standardized = (features - means) / scales

    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.01, size=features.shape[1])
    bias = 0.0
    for _ in range(epochs):
        _, grad_w, grad_b = log_loss_and_gradient(weights, bias, standardized, labels)
        weights -= learning_rate * grad_w
        bias -= learning_rate * grad_b

    return LogisticModel(
        weights=tuple(float(w) for w in weights),
        bias=float(bias),
        feature_means=tuple(float(m) for m in means),
        feature_scales=tuple(float(s) for s in scales),
    )


def predict(model: LogisticModel, features: FeatureVector) -> tuple[float, Label]:
    """Probability the pair is near, plus the thresholded label
    (near iff probability >= 0.5)."""
    z = float(model.standardize(features.as_array()) @ np.asarray(model.weights) + model.bias)
    probability = float(_sigmoid(np.array([z]))[0])
    return probability, Label(near=probability >= 0.5)


@dataclass(frozen=True)
class EvalReport:
    """Metrics with "near" as the positive class.

    ``confusion`` is ((tn, fp), (fn, tp)). When a precision/recall
    denominator is zero the metric reports 1.0 and the matching
    ``*_defined`` flag is False.
    """

    accuracy: float
    precision: float
    recall: float
    confusion: tuple[tuple[int, int], tuple[int, int]]
    precision_defined: bool = True
    recall_defined: bool = True

    @property
    def total(self) -> int:
        (tn, fp), (fn, tp) = self.confusion
        return tn + fp + fn + tp


def evaluate(model: LogisticModel, dataset: Sequence[TrainingRecord]) -> EvalReport:
    """Confusion counts and derived metrics of ``model`` over ``dataset``."""
    if not dataset:
        raise ValidationError("cannot evaluate on an empty dataset")
    tn = fp = fn = tp = 0
    for record in dataset:
        _, label = predict(model, extract_features(record.rssi_values))
        if record.label.near:
            if label.near:
                tp += 1
            else:
                fn += 1
        else:
            if label.near:
                fp += 1
            else:
                tn += 1
    total = tn + fp + fn + tp
    precision_defined = (tp + fp) > 0
    recall_defined = (tp + fn) > 0
    return EvalReport(
        accuracy=(tp + tn) / total,
        precision=tp / (tp + fp) if precision_defined else 1.0,
        recall=tp / (tp + fn) if recall_defined else 1.0,
        confusion=((tn, fp), (fn, tp)),
        precision_defined=precision_defined,
        recall_defined=recall_defined,
    )


def fit_threshold(dataset: Sequence[TrainingRecord]) -> float:
    """Brute-force sweep for the mean-diff cut that best separates the
    training set; used both as the baseline's fit and as an independent
    check on the trained model."""
    features, labels = _feature_matrix(dataset)
    diffs = features[:, FEATURE_ORDER.index("mean_abs_diff")]
    order = np.argsort(diffs)
    sorted_diffs = diffs[order]
    candidates = [sorted_diffs[0] - 1.0]
    candidates += [
        (sorted_diffs[i] + sorted_diffs[i + 1]) / 2.0 for i in range(len(sorted_diffs) - 1)
    ]
    candidates += [sorted_diffs[-1] + 1.0]
    best_cut, best_correct = candidates[0], -1
    for cut in candidates:
        if cut <= 0:
            continue
        predicted_near = diffs <= cut
        correct = int((predicted_near == (labels == 1.0)).sum())
        if correct > best_correct:
            best_correct, best_cut = correct, cut
    return float(best_cut)


def threshold_accuracy(dataset: Sequence[TrainingRecord], near_max_diff_db: float) -> float:
    correct = 0
    for record in dataset:
        label = threshold_classify(extract_features(record.rssi_values), near_max_diff_db)
        correct += label.near == record.label.near
    return correct / len(dataset)


# ---------------------------------------------------------------------------
# classifier plug points for the policy engine
# ---------------------------------------------------------------------------

class Classifier(Protocol):
    def classify(self, features: FeatureVector) -> tuple[float, Label]:
        """Probability the pair is near, and the resulting label."""
        ...


@dataclass(frozen=True)
class LogisticClassifier:
    model: LogisticModel

    def classify(self, features: FeatureVector) -> tuple[float, Label]:
        return predict(self.model, features)


@dataclass(frozen=True)
class ThresholdClassifier:
    """Baseline classifier; the pseudo-probability is a sigmoid of the
    margin to the cut so "nearest guardian" ranking still works."""

    near_max_diff_db: float = 10.0
    margin_scale_db: float = 4.0

    def classify(self, features: FeatureVector) -> tuple[float, Label]:
        label = threshold_classify(features, self.near_max_diff_db)
        z = (self.near_max_diff_db - features.mean_abs_diff) / self.margin_scale_db
        probability = 1.0 / (1.0 + math.exp(-min(60.0, max(-60.0, z))))
        return probability, label


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------

def model_to_dict(model: LogisticModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_order": list(FEATURE_ORDER),
        "weights": list(model.weights),
        "bias": model.bias,
        "feature_means": list(model.feature_means),
        "feature_scales": list(model.feature_scales),
    }


def model_from_dict(data: dict) -> LogisticModel:
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {version!r}")
    if tuple(data.get("feature_order", ())) != FEATURE_ORDER:
        raise ValidationError("model feature order does not match this build")
    return LogisticModel(
        weights=tuple(float(w) for w in data["weights"]),
        bias=float(data["bias"]),
        feature_means=tuple(float(m) for m in data["feature_means"]),
        feature_scales=tuple(float(s) for s in data["feature_scales"]),
    )


def save_model(model: LogisticModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> LogisticModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
