"""Accuracy and F1 metrics for the probe protocols.

Out-of-scope replies always count against accuracy and are additionally
reported as their own ratio, so a model cannot improve its score by
answering off-protocol.
"""

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from .parsing import ParsedResponse, Verdict

__all__ = [
    "MetricReport",
    "acc_binary",
    "acc_open",
    "weighted_f1",
    "normalize_prediction",
]

_ARTICLES = {"a", "an", "the"}
_TERMINAL_PUNCT = ".!?,;:"


def normalize_prediction(text: str) -> str:
    """Standard VQA answer normalization: lowercase, drop articles, strip
    terminal punctuation, collapse whitespace."""
    text = text.strip().lower().rstrip(_TERMINAL_PUNCT)
    words = [w for w in re.split(r"\s+", text) if w and w not in _ARTICLES]
    return " ".join(words)


def acc_binary(parsed: Sequence[ParsedResponse], gold: Sequence[bool]) -> float:
    """Fraction whose verdict matches gold answerability; OoS counts wrong."""
    if len(parsed) != len(gold):
        raise ValueError(f"length mismatch: {len(parsed)} parsed vs {len(gold)} gold")
    if not parsed:
        return 0.0
    correct = sum(
        1 for p, g in zip(parsed, gold) if p.predicted_answerable() == g
    )
    return correct / len(parsed)


def acc_open(
    predictions: Sequence[str],
    gold: Sequence[tuple[Iterable[str], bool]],
) -> float:
    """Open-set accuracy against each instance's valid answer set.

    A prediction is correct when its normalized form is in the instance's
    valid set, with "unanswerable" valid exactly when the consensus says the
    instance is unanswerable.
    """
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} vs {len(gold)}")
    if not predictions:
        return 0.0
    correct = 0
    for pred, (valid, unanswerable) in zip(predictions, gold):
        allowed = {normalize_prediction(v) for v in valid}
        if unanswerable:
            allowed.add("unanswerable")
        correct += normalize_prediction(pred) in allowed
    return correct / len(predictions)


def weighted_f1(predictions: Sequence[Hashable], gold: Sequence[Hashable]) -> float:
    """Support-weighted mean of per-class F1 over the gold classes.

    Per-class F1 = 2PR / (P + R) with 0/0 defined as 0; classes absent from
    the gold labels carry zero support and are excluded.
    """
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} vs {len(gold)}")
    support = Counter(gold)
    if not support:
        return 0.0
    total = 0.0
    for cls, n_cls in support.items():
        tp = sum(1 for p, g in zip(predictions, gold) if p == cls and g == cls)
        pred_cls = sum(1 for p in predictions if p == cls)
        precision = tp / pred_cls if pred_cls else 0.0
        recall = tp / n_cls
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        total += n_cls * f1
    return total / sum(support.values())


@dataclass
class MetricReport:
    """All metrics for one evaluation run.

    ``oos_ratio`` covers replies with no protocol-conforming verdict;
    ``error_ratio`` covers client failures (marked OoS-by-error and tallied
    separately). The breakdown maps answer types (plus "all") to their
    sub-metrics.
    """

    acc_b: float
    acc_o: float | None
    f1_weighted: float
    oos_ratio: float
    error_ratio: float = 0.0
    n_instances: int = 0
    breakdown: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "acc_b": self.acc_b,
            "acc_o": self.acc_o,
            "f1_weighted": self.f1_weighted,
            "oos_ratio": self.oos_ratio,
            "error_ratio": self.error_ratio,
            "n_instances": self.n_instances,
            "breakdown": self.breakdown,
        }
