"""Canonical data model, JSONL serialization, corpus filtering and splitting.

The on-disk corpus format is JSONL: one record per line with keys
``id, image, question, answers, question_type, answer_type, split``.
Perturbation records live in a parallel JSONL with keys
``source_id, kind, perturbed_question, perturbed_image, params, baseline_answer``.
"""

import json
import random
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable

from filelock import FileLock

__all__ = [
    "AnswerType",
    "Split",
    "PerturbationKind",
    "VqaInstance",
    "PerturbationRecord",
    "DatasetSplit",
    "DatasetError",
    "load_dataset",
    "save_dataset",
    "load_records",
    "save_records",
    "filter_binary_answers",
    "split_dataset",
    "normalize_answer",
]


class DatasetError(ValueError):
    """Raised for malformed corpus files; message carries line-level context."""


class AnswerType(str, Enum):
    YES_NO = "yes/no"
    NUMBER = "number"
    OTHER = "other"

    @classmethod
    def parse(cls, raw: str) -> "AnswerType":
        # "yes-no" is accepted as an alias for the canonical "yes/no".
        if raw == "yes-no":
            return cls.YES_NO
        return cls(raw)


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"
    UNASSIGNED = "unassigned"


class PerturbationKind(str, Enum):
    """The five controlled edits. T-kinds rewrite the question, I-kinds the image."""

    WORD_REPLACE = "T-1"
    NEGATION = "T-2"
    IMAGE_REPLACE = "I-1"
    OBJECT_MASK = "I-2"
    COPY_MOVE = "I-3"

    @property
    def is_text(self) -> bool:
        return self in (PerturbationKind.WORD_REPLACE, PerturbationKind.NEGATION)


@dataclass
class VqaInstance:
    """One <image, question, answer> record with provenance and split."""

    id: str
    image_ref: str
    question: str
    answers: list[str]
    question_type: str = ""
    answer_type: AnswerType = AnswerType.OTHER
    split: Split = Split.UNASSIGNED

    def validate(self) -> None:
        if not self.id:
            raise DatasetError("instance id must be non-empty")
        if not self.question.strip():
            raise DatasetError(f"instance {self.id!r}: question must be non-empty")
        if not self.answers:
            raise DatasetError(f"instance {self.id!r}: answers must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "image": self.image_ref,
            "question": self.question,
            "answers": list(self.answers),
            "question_type": self.question_type,
            "answer_type": self.answer_type.value,
            "split": self.split.value,
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "VqaInstance":
        if not isinstance(obj, dict):
            raise DatasetError("record must be a JSON object")
        for key in ("id", "image", "question", "answers"):
            if key not in obj:
                raise DatasetError(f"missing required field: {key}")
        if not isinstance(obj["answers"], list):
            raise DatasetError("answers must be a list")
        try:
            answer_type = AnswerType.parse(obj.get("answer_type", "other"))
            split = Split(obj.get("split", "unassigned"))
        except ValueError as exc:
            raise DatasetError(str(exc)) from exc
        inst = cls(
            id=str(obj["id"]),
            image_ref=str(obj["image"]),
            question=str(obj["question"]),
            answers=[str(a) for a in obj["answers"]],
            question_type=str(obj.get("question_type", "")),
            answer_type=answer_type,
            split=split,
        )
        inst.validate()
        return inst


@dataclass
class PerturbationRecord:
    """Which perturbation was applied, with every free parameter recorded."""

    source_id: str
    kind: PerturbationKind
    perturbed_question: str | None = None
    perturbed_image_ref: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    baseline_answer: str | None = None

    def validate(self) -> None:
        if self.kind.is_text:
            if self.perturbed_question is None or self.perturbed_image_ref is not None:
                raise DatasetError(
                    f"{self.kind.value} record for {self.source_id!r} must set "
                    "perturbed_question and not perturbed_image"
                )
        else:
            if self.perturbed_image_ref is None or self.perturbed_question is not None:
                raise DatasetError(
                    f"{self.kind.value} record for {self.source_id!r} must set "
                    "perturbed_image and not perturbed_question"
                )

    def to_dict(self) -> dict[str, Any]:
        return {
            "source_id": self.source_id,
            "kind": self.kind.value,
            "perturbed_question": self.perturbed_question,
            "perturbed_image": self.perturbed_image_ref,
            "params": self.params,
            "baseline_answer": self.baseline_answer,
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "PerturbationRecord":
        for key in ("source_id", "kind"):
            if key not in obj:
                raise DatasetError(f"missing required field: {key}")
        try:
            kind = PerturbationKind(obj["kind"])
        except ValueError as exc:
            raise DatasetError(str(exc)) from exc
        rec = cls(
            source_id=str(obj["source_id"]),
            kind=kind,
            perturbed_question=obj.get("perturbed_question"),
            perturbed_image_ref=obj.get("perturbed_image"),
            params=dict(obj.get("params", {})),
            baseline_answer=obj.get("baseline_answer"),
        )
        rec.validate()
        return rec


@dataclass
class DatasetSplit:
    """Disjoint train/valid/test id lists plus the seed that produced them."""

    train_ids: list[str]
    valid_ids: list[str]
    test_ids: list[str]
    seed: int

    def validate(self) -> None:
        groups = [set(self.train_ids), set(self.valid_ids), set(self.test_ids)]
        total = sum(len(g) for g in groups)
        if total != len(groups[0] | groups[1] | groups[2]):
            raise DatasetError("split id lists must be pairwise disjoint")


def _read_jsonl(path: str | Path, parse: Callable[[dict], Any]) -> list[Any]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    items = []
    errors = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(f"line {lineno}: invalid JSON ({exc.msg})")
                continue
            try:
                items.append((lineno, parse(obj)))
            except DatasetError as exc:
                errors.append(f"line {lineno}: {exc}")
    if errors:
        raise DatasetError(f"{path}: " + "; ".join(errors))
    return items


def load_dataset(path: str | Path) -> list[VqaInstance]:
    """Load a JSONL corpus, validating every record.

    Malformed lines are reported with their line numbers; duplicate ids name
    both offending lines.
    """
    numbered = _read_jsonl(path, VqaInstance.from_dict)
    seen: dict[str, int] = {}
    for lineno, inst in numbered:
        if inst.id in seen:
            raise DatasetError(
                f"{path}: line {lineno}: duplicate id {inst.id!r} "
                f"(first seen on line {seen[inst.id]})"
            )
        seen[inst.id] = lineno
    return [inst for _, inst in numbered]


def _write_jsonl(items: Iterable[Any], path: str | Path) -> None:
    # Advisory lock: one writer per output path at a time.
    path = Path(path)
    with FileLock(str(path) + ".lock"):
        with path.open("w", encoding="utf-8") as fh:
            for item in items:
                fh.write(json.dumps(item.to_dict(), ensure_ascii=False) + "\n")


def save_dataset(instances: list[VqaInstance], path: str | Path) -> None:
    """Write instances as canonical JSONL (fixed key order, UTF-8, no escaping)."""
    for inst in instances:
        inst.validate()
    _write_jsonl(instances, path)


def load_records(path: str | Path) -> list[PerturbationRecord]:
    """Load perturbation records from their parallel JSONL file."""
    return [rec for _, rec in _read_jsonl(path, PerturbationRecord.from_dict)]


def save_records(records: list[PerturbationRecord], path: str | Path) -> None:
    for rec in records:
        rec.validate()
    _write_jsonl(records, path)


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(answer: str) -> str:
    """Lowercase and strip surrounding whitespace/punctuation."""
    return answer.strip().translate(_PUNCT_TABLE).strip().lower()


def filter_binary_answers(instances: list[VqaInstance]) -> list[VqaInstance]:
    """Drop instances whose answers are binary.

    A question with opposite semantics can be answered with the other binary
    option, so perturbing these yields no unanswerable candidates. Removes any
    instance typed yes/no or with a ground-truth answer normalizing to
    "yes"/"no". Idempotent.
    """
    kept = []
    for inst in instances:
        if inst.answer_type is AnswerType.YES_NO:
            continue
        if any(normalize_answer(a) in ("yes", "no") for a in inst.answers):
            continue
        kept.append(inst)
    return kept


def split_dataset(
    instances: list[VqaInstance],
    ratios: tuple[float, float, float],
    seed: int,
    stratify_key: Callable[[VqaInstance], str] | None = None,
) -> DatasetSplit:
    """Partition instances into train/valid/test by ``ratios``.

    Valid/test sizes are the largest integers <= ratio * N; the remainder goes
    to train, keeping eval sets at most their nominal size. Deterministic for a
    fixed seed. ``stratify_key`` optionally applies the same ratios within each
    key group (e.g. per perturbation kind); the default is unstratified.
    """
    r_train, r_valid, r_test = ratios
    if min(ratios) <= 0:
        raise ValueError("ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")

    if stratify_key is not None:
        groups: dict[str, list[VqaInstance]] = {}
        for inst in instances:
            groups.setdefault(stratify_key(inst), []).append(inst)
        train: list[str] = []
        valid: list[str] = []
        test: list[str] = []
        for key in sorted(groups):
            part = split_dataset(groups[key], ratios, seed)
            train += part.train_ids
            valid += part.valid_ids
            test += part.test_ids
        return DatasetSplit(train, valid, test, seed)

    ids = [inst.id for inst in instances]
    rng = random.Random(seed)
    rng.shuffle(ids)
    n = len(ids)
    # epsilon guards against ratio*n landing just below an exact integer
    n_valid = int(r_valid * n + 1e-9)
    n_test = int(r_test * n + 1e-9)
    n_train = n - n_valid - n_test
    split = DatasetSplit(
        train_ids=ids[:n_train],
        valid_ids=ids[n_train : n_train + n_valid],
        test_ids=ids[n_train + n_valid :],
        seed=seed,
    )
    split.validate()
    return split
