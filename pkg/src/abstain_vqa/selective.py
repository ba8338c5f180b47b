"""Selective answering: a classifier paired with a selection function that
either emits the predicted answer or abstains.

The answer head maps a fused multimodal feature to a distribution over the
candidate answer set; the selection function compares a confidence estimate
against a threshold ``theta``. Two confidence families are provided: a
binary answerability classifier (CLS) and the entropy of the predicted
distribution (ENT), with max-logit as the bounded-range alternative to raw
entropy. Training labels unanswerable instances with a uniform target
distribution so the model learns to spread probability mass on them.
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .backends import FusionBackend

__all__ = [
    "ABSTAIN",
    "Variant",
    "FusedFeature",
    "AnswerDistribution",
    "SelectiveConfig",
    "SelectiveOutput",
    "LinearSoftmaxHead",
    "LinearSigmoidHead",
    "SelectiveHeads",
    "TrainConfig",
    "fuse",
    "predict_answer",
    "confidence_cls",
    "confidence_ent",
    "select",
    "uniform_target",
    "fit_selective",
    "calibrate_threshold",
    "selective_confidence",
    "save_features",
    "load_features",
    "save_heads",
    "load_heads",
]


ABSTAIN = None  # the abstention result; SelectiveOutput.result is None iff abstaining


class Variant(str, Enum):
    CLS = "CLS"
    ENT = "ENT"
    MAXLOGIT = "MAXLOGIT"


@dataclass
class FusedFeature:
    x: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.x)):
            raise ValueError(f"non-finite fused feature for {self.provenance!r}")


@dataclass
class AnswerDistribution:
    """Softmax distribution over the answer set, with its source logits when
    they exist (max-logit confidence needs the pre-softmax values)."""

    probs: np.ndarray
    logits: np.ndarray | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).ravel()
        if self.logits is not None:
            self.logits = np.asarray(self.logits, dtype=np.float64).ravel()
        if np.any(self.probs < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(self.probs.sum()) - 1.0) > 1e-6:
            raise ValueError(f"probabilities must sum to 1, got {self.probs.sum()!r}")

    @property
    def argmax(self) -> int:
        # np.argmax returns the first maximum: lowest answer id on ties
        return int(np.argmax(self.probs))


@dataclass
class SelectiveConfig:
    variant: Variant
    theta: float

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")


@dataclass
class SelectiveOutput:
    result: int | None
    confidence: float

    @property
    def abstained(self) -> bool:
        return self.result is ABSTAIN


def fuse(
    image_encoding: np.ndarray,
    text_encoding: np.ndarray,
    fusion: FusionBackend,
    provenance: str = "",
) -> FusedFeature:
    """Fuse the two modality encodings with the configured backend."""
    return FusedFeature(fusion.fuse(image_encoding, text_encoding), provenance)


@dataclass
class LinearSoftmaxHead:
    """Affine map to answer logits."""

    weights: np.ndarray  # (dim, n_answers)
    bias: np.ndarray  # (n_answers,)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias

    @property
    def n_answers(self) -> int:
        return self.weights.shape[1]


@dataclass
class LinearSigmoidHead:
    """Affine map to an answerability score in (0, 1)."""

    weights: np.ndarray  # (dim,)
    bias: float

    def confidence(self, x: np.ndarray) -> float:
        z = float(np.asarray(x, dtype=np.float64) @ self.weights + self.bias)
        return 1.0 / (1.0 + math.exp(-z))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def predict_answer(feature: FusedFeature, head: LinearSoftmaxHead) -> AnswerDistribution:
    """Softmax-normalized answer distribution; argmax ties break to the
    lowest answer id."""
    logits = head.logits(feature.x)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    return AnswerDistribution(probs=_softmax(logits), logits=logits)


def confidence_cls(feature: FusedFeature, binary_head: LinearSigmoidHead) -> float:
    """Sigmoid answerability score; higher means more answerable."""
    return binary_head.confidence(feature.x)


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats with the 0*log(0) := 0 convention."""
    p = np.asarray(probs, dtype=np.float64)
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


def confidence_ent(dist: AnswerDistribution, mode: str = "entropy") -> float:
    """Entropy of the distribution, or the maximum pre-softmax logit.

    Max-logit eases the unbounded range of entropy thresholds while keeping
    the same "low confidence means abstain" reading once negated into the
    selection rule.
    """
    if mode == "entropy":
        return entropy(dist.probs)
    if mode == "max-logit":
        if dist.logits is None:
            raise ValueError("max-logit confidence requires the distribution's logits")
        return float(dist.logits.max())
    raise ValueError(f"unknown mode {mode!r}")


def select(
    dist: AnswerDistribution,
    confidence: float,
    config: SelectiveConfig,
) -> SelectiveOutput:
    """Answer or abstain.

    CLS and MAXLOGIT answer when confidence >= theta. ENT abstains when the
    entropy exceeds theta (high entropy signals randomness), so answering
    keeps boundary equality.
    """
    if config.variant is Variant.ENT:
        answer = confidence <= config.theta
    else:
        answer = confidence >= config.theta
    return SelectiveOutput(result=dist.argmax if answer else ABSTAIN, confidence=confidence)


def uniform_target(answer_set_size: int) -> AnswerDistribution:
    """The uniform training target used to label unanswerable instances."""
    if answer_set_size < 1:
        raise ValueError("answer set must be non-empty")
    return AnswerDistribution(probs=np.full(answer_set_size, 1.0 / answer_set_size))


# ---------------------------------------------------------------------------
# Training and calibration
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 500
    seed: int = 0
    init_scale: float = 0.01


@dataclass
class SelectiveHeads:
    answer_head: LinearSoftmaxHead
    binary_head: LinearSigmoidHead | None = None


def fit_selective(
    features: list[FusedFeature],
    labels: list[int | None],
    n_answers: int,
    variant: Variant,
    train: TrainConfig | None = None,
) -> SelectiveHeads:
    """Fit the answer head (and, for CLS, the binary answerability head).

    Answerable instances (integer label) train against one-hot targets.
    Unanswerable instances (label None) train against the uniform target for
    the entropy family; under CLS they only feed the binary head. Full-batch
    gradient descent, deterministic under the config seed.
    """
    if len(features) != len(labels):
        raise ValueError(
            f"feature/label length mismatch: {len(features)} vs {len(labels)}"
        )
    if not features:
        raise ValueError("empty training set")
    train = train or TrainConfig()
    x = np.stack([f.x for f in features])
    n, dim = x.shape
    rng = np.random.default_rng(train.seed)

    targets = np.zeros((n, n_answers))
    weight = np.zeros(n)
    for i, label in enumerate(labels):
        if label is None:
            if variant is not Variant.CLS:
                targets[i] = 1.0 / n_answers
                weight[i] = 1.0
        else:
            if not 0 <= label < n_answers:
                raise ValueError(f"label {label} outside answer set of {n_answers}")
            targets[i, label] = 1.0
            weight[i] = 1.0

    w = rng.normal(0.0, train.init_scale, size=(dim, n_answers))
    b = np.zeros(n_answers)
    total = weight.sum()
    if total > 0:
        for _ in range(train.epochs):
            probs = _softmax(x @ w + b)
            delta = (probs - targets) * weight[:, None] / total
            w -= train.learning_rate * (x.T @ delta)
            b -= train.learning_rate * delta.sum(axis=0)
    answer_head = LinearSoftmaxHead(weights=w, bias=b)

    binary_head = None
    if variant is Variant.CLS:
        y = np.array([0.0 if label is None else 1.0 for label in labels])
        wb = rng.normal(0.0, train.init_scale, size=dim)
        bb = 0.0
        for _ in range(train.epochs):
            z = x @ wb + bb
            p = 1.0 / (1.0 + np.exp(-z))
            delta = (p - y) / n
            wb -= train.learning_rate * (x.T @ delta)
            bb -= train.learning_rate * float(delta.sum())
        binary_head = LinearSigmoidHead(weights=wb, bias=bb)

    return SelectiveHeads(answer_head=answer_head, binary_head=binary_head)


def selective_confidence(
    feature: FusedFeature,
    dist: AnswerDistribution,
    heads: SelectiveHeads,
    variant: Variant,
) -> float:
    """The confidence value the selection rule compares against theta."""
    if variant is Variant.CLS:
        if heads.binary_head is None:
            raise ValueError("CLS variant requires a trained binary head")
        return confidence_cls(feature, heads.binary_head)
    if variant is Variant.ENT:
        return confidence_ent(dist, "entropy")
    return confidence_ent(dist, "max-logit")


def calibrate_threshold(
    features: list[FusedFeature],
    labels: list[int | None],
    heads: SelectiveHeads,
    variant: Variant,
    grid: list[float],
) -> tuple[float, list[tuple[float, float]]]:
    """Sweep the threshold grid and pick the open-accuracy argmax.

    Returns (theta, curve) where the curve holds (theta, acc_o) for every
    grid point; ties resolve to the smallest theta.
    """
    if not grid:
        raise ValueError("empty calibration grid")
    if len(features) != len(labels):
        raise ValueError("feature/label length mismatch")
    if not features:
        raise ValueError("empty validation set")

    prepared = []
    for feature, label in zip(features, labels):
        dist = predict_answer(feature, heads.answer_head)
        conf = selective_confidence(feature, dist, heads, variant)
        prepared.append((dist, conf, label))

    curve = []
    for theta in grid:
        config = SelectiveConfig(variant=variant, theta=theta)
        correct = 0
        for dist, conf, label in prepared:
            out = select(dist, conf, config)
            if out.abstained:
                correct += label is None
            else:
                correct += label == out.result
        curve.append((float(theta), correct / len(prepared)))

    best_acc = max(acc for _, acc in curve)
    best_theta = min(theta for theta, acc in curve if acc == best_acc)
    return best_theta, curve


# ---------------------------------------------------------------------------
# Serialization: feature matrices and trained heads
# ---------------------------------------------------------------------------

_FEATURE_VERSION = 1
_HEADS_VERSION = 1


def save_features(features: list[FusedFeature], bin_path: str | Path) -> None:
    """Write features as little-endian float32, row-major, with a JSON
    manifest (dims + ids) sitting next to the binary file."""
    bin_path = Path(bin_path)
    matrix = np.stack([f.x for f in features]).astype("<f4") if features else np.zeros((0, 0), "<f4")
    matrix.tofile(bin_path)
    manifest = {
        "version": _FEATURE_VERSION,
        "dtype": "<f4",
        "order": "row-major",
        "rows": int(matrix.shape[0]),
        "cols": int(matrix.shape[1]) if features else 0,
        "ids": [f.provenance for f in features],
    }
    bin_path.with_suffix(bin_path.suffix + ".json").write_text(
        json.dumps(manifest, indent=2), encoding="utf-8"
    )


def load_features(bin_path: str | Path) -> list[FusedFeature]:
    bin_path = Path(bin_path)
    manifest = json.loads(
        bin_path.with_suffix(bin_path.suffix + ".json").read_text(encoding="utf-8")
    )
    if manifest["version"] != _FEATURE_VERSION:
        raise ValueError(f"unsupported feature file version {manifest['version']}")
    rows, cols = manifest["rows"], manifest["cols"]
    data = np.fromfile(bin_path, dtype="<f4").reshape(rows, cols)
    return [
        FusedFeature(x=row.astype(np.float64), provenance=pid)
        for row, pid in zip(data, manifest["ids"])
    ]


def save_heads(heads: SelectiveHeads, json_path: str | Path) -> None:
    """Serialize trained heads as a versioned JSON + raw float32 blob pair."""
    json_path = Path(json_path)
    blob_path = json_path.with_suffix(".bin")
    answer = heads.answer_head
    parts = [answer.weights.astype("<f4").ravel(), answer.bias.astype("<f4")]
    meta = {
        "version": _HEADS_VERSION,
        "blob": blob_path.name,
        "dim": int(answer.weights.shape[0]),
        "n_answers": int(answer.weights.shape[1]),
        "has_binary_head": heads.binary_head is not None,
    }
    if heads.binary_head is not None:
        parts.append(heads.binary_head.weights.astype("<f4"))
        parts.append(np.array([heads.binary_head.bias], dtype="<f4"))
    np.concatenate(parts).tofile(blob_path)
    json_path.write_text(json.dumps(meta, indent=2), encoding="utf-8")


def load_heads(json_path: str | Path) -> SelectiveHeads:
    json_path = Path(json_path)
    meta = json.loads(json_path.read_text(encoding="utf-8"))
    if meta["version"] != _HEADS_VERSION:
        raise ValueError(f"unsupported heads version {meta['version']}")
    blob = np.fromfile(json_path.parent / meta["blob"], dtype="<f4").astype(np.float64)
    dim, n_answers = meta["dim"], meta["n_answers"]
    w_end = dim * n_answers
    answer_head = LinearSoftmaxHead(
        weights=blob[:w_end].reshape(dim, n_answers),
        bias=blob[w_end : w_end + n_answers],
    )
    binary_head = None
    if meta["has_binary_head"]:
        offset = w_end + n_answers
        binary_head = LinearSigmoidHead(
            weights=blob[offset : offset + dim],
            bias=float(blob[offset + dim]),
        )
    return SelectiveHeads(answer_head=answer_head, binary_head=binary_head)
