"""Human-labeling workflow: task construction, CSV exchange, majority-vote
consensus, and survey analytics.

Workers first review exemplar unanswerable questions with reasons, then label
whether the shown question can be answered. Unanswerable verdicts carry a
reason (R1-R4) and a canned response (A1-A3); answerable verdicts carry the
element believed altered and one of three provenance-tagged answer options.
Every response records a 1-5 confidence.
"""

import csv
import json
import logging
import random
import zlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .data import PerturbationRecord, VqaInstance, normalize_answer

logger = logging.getLogger(__name__)

__all__ = [
    "Reason",
    "UnanswerableAnswer",
    "AlteredElement",
    "AnswerProvenance",
    "AnswerOption",
    "Exemplar",
    "AnnotationTask",
    "AnnotatorResponse",
    "ConsensusValue",
    "ConsensusLabel",
    "ResponseValidationError",
    "TaskBuildError",
    "IngestResult",
    "AnalyticsReport",
    "build_task",
    "export_tasks",
    "save_responses",
    "ingest_responses",
    "majority_vote",
    "consensus_answer",
    "analytics",
]


class Reason(str, Enum):
    """Why a question cannot be answered."""

    R1 = "unclear"
    R2 = "higher-level knowledge"
    R3 = "image lacks concepts"
    R4 = "multiple answers"


class UnanswerableAnswer(str, Enum):
    """Canned responses a worker can give to an unanswerable question."""

    A1 = "I cannot answer"
    A2 = "I don't know"
    A3 = "Not sure"


class AlteredElement(str, Enum):
    IMAGE = "image"
    QUESTION = "question"


class AnswerProvenance(str, Enum):
    ORIGINAL = "original"
    BASELINE = "baseline"
    RANDOM = "random"


_PROVENANCE_ORDER = {p: i for i, p in enumerate(AnswerProvenance)}
_UNANSWERABLE_ORDER = {a: i for i, a in enumerate(UnanswerableAnswer)}


@dataclass(frozen=True)
class AnswerOption:
    text: str
    provenance: AnswerProvenance


@dataclass(frozen=True)
class Exemplar:
    """An unanswerable example shown to workers before labeling."""

    image_ref: str
    question: str
    reason: Reason


class ResponseValidationError(ValueError):
    pass


class TaskBuildError(ValueError):
    pass


@dataclass
class AnnotationTask:
    task_id: str
    image_ref: str
    question: str
    answer_options: list[AnswerOption]
    exemplars: list[Exemplar] = field(default_factory=list)

    def validate(self) -> None:
        if len(self.answer_options) != 3:
            raise TaskBuildError(f"task {self.task_id!r}: exactly 3 answer options required")
        provenances = {opt.provenance for opt in self.answer_options}
        if provenances != set(AnswerProvenance):
            raise TaskBuildError(
                f"task {self.task_id!r}: options must carry provenance "
                "{original, baseline, random}"
            )
        normalized = {normalize_answer(opt.text) for opt in self.answer_options}
        if len(normalized) != 3:
            raise TaskBuildError(
                f"task {self.task_id!r}: options must be mutually distinct"
            )

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "image": self.image_ref,
            "question": self.question,
            "answer_options": [
                {"text": o.text, "provenance": o.provenance.value}
                for o in self.answer_options
            ],
            "exemplars": [
                {"image": e.image_ref, "question": e.question, "reason": e.reason.value}
                for e in self.exemplars
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AnnotationTask":
        task = cls(
            task_id=obj["task_id"],
            image_ref=obj["image"],
            question=obj["question"],
            answer_options=[
                AnswerOption(o["text"], AnswerProvenance(o["provenance"]))
                for o in obj["answer_options"]
            ],
            exemplars=[
                Exemplar(e["image"], e["question"], Reason(e["reason"]))
                for e in obj.get("exemplars", [])
            ],
        )
        task.validate()
        return task


@dataclass
class AnnotatorResponse:
    """One worker's survey response for one task."""

    task_id: str
    worker_id: str
    answerable: bool
    confidence: int
    reason: Reason | None = None
    unanswerable_answer: UnanswerableAnswer | None = None
    altered_element: AlteredElement | None = None
    chosen_answer: AnswerOption | None = None

    def validate(self) -> None:
        if not 1 <= self.confidence <= 5:
            raise ResponseValidationError(
                f"confidence must be in 1..5, got {self.confidence}"
            )
        if self.answerable:
            if self.reason is not None or self.unanswerable_answer is not None:
                raise ResponseValidationError(
                    "answerable response must not carry a reason or unanswerable answer"
                )
            if self.altered_element is None or self.chosen_answer is None:
                raise ResponseValidationError(
                    "answerable response requires altered_element and chosen_answer"
                )
        else:
            if self.reason is None or self.unanswerable_answer is None:
                raise ResponseValidationError(
                    "unanswerable response requires a reason and an unanswerable answer"
                )
            if self.altered_element is not None or self.chosen_answer is not None:
                raise ResponseValidationError(
                    "unanswerable response must not carry altered_element or chosen_answer"
                )

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "worker_id": self.worker_id,
            "answerable": self.answerable,
            "confidence": self.confidence,
            "reason": self.reason.name if self.reason else None,
            "unanswerable_answer": (
                self.unanswerable_answer.name if self.unanswerable_answer else None
            ),
            "altered_element": self.altered_element.value if self.altered_element else None,
            "chosen_answer": self.chosen_answer.text if self.chosen_answer else None,
            "chosen_provenance": (
                self.chosen_answer.provenance.value if self.chosen_answer else None
            ),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AnnotatorResponse":
        chosen = None
        if obj.get("chosen_answer") is not None:
            if obj.get("chosen_provenance") is None:
                raise ResponseValidationError("chosen_answer requires chosen_provenance")
            chosen = AnswerOption(
                obj["chosen_answer"], AnswerProvenance(obj["chosen_provenance"])
            )
        resp = cls(
            task_id=str(obj["task_id"]),
            worker_id=str(obj["worker_id"]),
            answerable=_parse_bool(obj["answerable"]),
            confidence=int(obj["confidence"]),
            reason=Reason[obj["reason"]] if obj.get("reason") else None,
            unanswerable_answer=(
                UnanswerableAnswer[obj["unanswerable_answer"]]
                if obj.get("unanswerable_answer")
                else None
            ),
            altered_element=(
                AlteredElement(obj["altered_element"]) if obj.get("altered_element") else None
            ),
            chosen_answer=chosen,
        )
        resp.validate()
        return resp


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ResponseValidationError(f"not a boolean: {value!r}")


class ConsensusValue(str, Enum):
    ANSWERABLE = "answerable"
    UNANSWERABLE = "unanswerable"
    NO_CONSENSUS = "no-consensus"


@dataclass
class ConsensusLabel:
    task_id: str
    label: ConsensusValue
    votes: dict[str, int]
    mean_confidence: float

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "label": self.label.value,
            "votes": self.votes,
            "mean_confidence": self.mean_confidence,
        }


# ---------------------------------------------------------------------------
# Task construction and CSV exchange
# ---------------------------------------------------------------------------


def build_task(
    record: PerturbationRecord,
    source: VqaInstance,
    baseline_answer: str,
    rng_seed: int,
    corpus: list[VqaInstance],
    exemplars: list[Exemplar] | None = None,
) -> AnnotationTask:
    """Assemble the labeling task for one perturbation record.

    The random option is drawn uniformly (seeded) from the answers of corpus
    instances sharing the source's question type, excluding anything that
    normalizes to the original or baseline option; when the same-type pool is
    exhausted the draw falls back corpus-wide with a warning.
    """
    original = source.answers[0]
    taken = {normalize_answer(original), normalize_answer(baseline_answer)}
    if len(taken) != 2:
        raise TaskBuildError(
            f"{record.source_id}: baseline answer {baseline_answer!r} duplicates "
            "the original ground truth; cannot build distinct options"
        )

    def pool(instances: list[VqaInstance]) -> list[str]:
        by_norm: dict[str, str] = {}
        for inst in instances:
            if inst.id == source.id:
                continue
            for answer in inst.answers:
                norm = normalize_answer(answer)
                if norm and norm not in taken:
                    by_norm.setdefault(norm, answer)
        return [by_norm[k] for k in sorted(by_norm)]

    same_type = pool([i for i in corpus if i.question_type == source.question_type])
    candidates = same_type
    if not candidates:
        candidates = pool(corpus)
        if candidates:
            logger.warning(
                "%s: no same-type answer available; drawing corpus-wide",
                record.source_id,
            )
    if not candidates:
        raise TaskBuildError(f"{record.source_id}: no random answer candidate in corpus")

    rng = random.Random(rng_seed)
    random_answer = candidates[rng.randrange(len(candidates))]

    question = record.perturbed_question or source.question
    image_ref = record.perturbed_image_ref or source.image_ref
    suffix = zlib.crc32((question + "\x00" + image_ref).encode()) & 0xFFFFFF
    task = AnnotationTask(
        task_id=f"{record.source_id}:{record.kind.value}:{suffix:06x}",
        image_ref=image_ref,
        question=question,
        answer_options=[
            AnswerOption(original, AnswerProvenance.ORIGINAL),
            AnswerOption(baseline_answer, AnswerProvenance.BASELINE),
            AnswerOption(random_answer, AnswerProvenance.RANDOM),
        ],
        exemplars=exemplars or [],
    )
    task.validate()
    return task


_TASK_HEADER = ["task_id", "image", "question", "opt_original", "opt_baseline", "opt_random", "exemplars"]
_RESPONSE_HEADER = [
    "task_id",
    "worker_id",
    "answerable",
    "reason",
    "unanswerable_answer",
    "altered_element",
    "chosen_answer",
    "chosen_provenance",
    "confidence",
]


def export_tasks(tasks: list[AnnotationTask], path: str | Path) -> None:
    """Write tasks as CSV, one row per task (AMT-compatible exchange)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TASK_HEADER)
        for task in tasks:
            task.validate()
            by_prov = {o.provenance: o.text for o in task.answer_options}
            writer.writerow(
                [
                    task.task_id,
                    task.image_ref,
                    task.question,
                    by_prov[AnswerProvenance.ORIGINAL],
                    by_prov[AnswerProvenance.BASELINE],
                    by_prov[AnswerProvenance.RANDOM],
                    json.dumps(
                        [
                            {"image": e.image_ref, "question": e.question, "reason": e.reason.name}
                            for e in task.exemplars
                        ]
                    ),
                ]
            )


def save_responses(responses: list[AnnotatorResponse], path: str | Path) -> None:
    """Write responses in the ingestion CSV schema (fixture/round-trip helper)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_RESPONSE_HEADER)
        writer.writeheader()
        for resp in responses:
            resp.validate()
            row = resp.to_dict()
            row["answerable"] = "true" if row["answerable"] else "false"
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in _RESPONSE_HEADER})


@dataclass
class IngestResult:
    accepted: list[AnnotatorResponse]
    rejected: list[tuple[int, str]]  # (row number, diagnostic)


def ingest_responses(path: str | Path) -> IngestResult:
    """Read a response CSV, validating every row; inconsistent rows are
    rejected with row-level diagnostics rather than aborting the batch."""
    accepted: list[AnnotatorResponse] = []
    rejected: list[tuple[int, str]] = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_RESPONSE_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ResponseValidationError(
                f"{path}: missing columns: {', '.join(sorted(missing))}"
            )
        for row_no, row in enumerate(reader, start=2):
            cleaned = {k: (v if v != "" else None) for k, v in row.items()}
            try:
                accepted.append(AnnotatorResponse.from_dict(cleaned))
            except (ResponseValidationError, KeyError, ValueError) as exc:
                rejected.append((row_no, str(exc)))
    return IngestResult(accepted=accepted, rejected=rejected)


# ---------------------------------------------------------------------------
# Consensus
# ---------------------------------------------------------------------------


def majority_vote(responses: list[AnnotatorResponse]) -> ConsensusLabel:
    """Majority answerability over at least three responses for one task.

    An exact tie (possible once real ingestion produces even counts) yields
    no-consensus; such tasks are flagged for another annotation round.
    """
    if len(responses) < 3:
        raise ValueError(f"under-annotated: {len(responses)} responses, need >= 3")
    task_ids = {r.task_id for r in responses}
    if len(task_ids) != 1:
        raise ValueError(f"responses span multiple tasks: {sorted(task_ids)}")
    n_yes = sum(1 for r in responses if r.answerable)
    n_no = len(responses) - n_yes
    if n_yes > n_no:
        label = ConsensusValue.ANSWERABLE
    elif n_no > n_yes:
        label = ConsensusValue.UNANSWERABLE
    else:
        label = ConsensusValue.NO_CONSENSUS
    return ConsensusLabel(
        task_id=responses[0].task_id,
        label=label,
        votes={"answerable": n_yes, "unanswerable": n_no},
        mean_confidence=sum(r.confidence for r in responses) / len(responses),
    )


def _plurality(groups: dict, order_key) -> object:
    """Plurality winner; ties by higher mean voter confidence, then fixed order."""
    best_key = None
    best_rank = None
    for key, confidences in groups.items():
        mean_conf = sum(confidences) / len(confidences)
        rank = (-len(confidences), -mean_conf, order_key(key))
        if best_rank is None or rank < best_rank:
            best_rank = rank
            best_key = key
    return best_key


def consensus_answer(responses: list[AnnotatorResponse], label: ConsensusValue) -> str:
    """The consensus answer text for a task with a settled label."""
    if label is ConsensusValue.NO_CONSENSUS:
        raise ValueError("no consensus answer for a no-consensus task")
    option = _winning_choice(responses, label)
    if isinstance(option, AnswerOption):
        return option.text
    return option.value


def _winning_choice(responses: list[AnnotatorResponse], label: ConsensusValue):
    if label is ConsensusValue.UNANSWERABLE:
        groups: dict[UnanswerableAnswer, list[int]] = {}
        for r in responses:
            if not r.answerable and r.unanswerable_answer is not None:
                groups.setdefault(r.unanswerable_answer, []).append(r.confidence)
        return _plurality(groups, lambda a: _UNANSWERABLE_ORDER[a])
    groups = {}
    for r in responses:
        if r.answerable and r.chosen_answer is not None:
            groups.setdefault(r.chosen_answer, []).append(r.confidence)
    return _plurality(groups, lambda o: _PROVENANCE_ORDER[o.provenance])


# ---------------------------------------------------------------------------
# Analytics
# ---------------------------------------------------------------------------


@dataclass
class AnalyticsReport:
    """The survey analytics: confidence/consensus counts, reason-answer
    interplay, answer shift, and per-kind unanswerability ratios."""

    confidence_consensus: dict[int, dict[str, int]]
    interplay: dict[str, dict[str, int]]
    answer_shift_pct: dict[str, float]
    unanswerability_ratio: dict[str, float]
    n_responses: int
    n_tasks: int

    def to_dict(self) -> dict:
        return {
            "confidence_consensus": self.confidence_consensus,
            "interplay": self.interplay,
            "answer_shift_pct": self.answer_shift_pct,
            "unanswerability_ratio": self.unanswerability_ratio,
            "n_responses": self.n_responses,
            "n_tasks": self.n_tasks,
        }


def analytics(
    responses: list[AnnotatorResponse],
    consensus: list[ConsensusLabel],
    task_kinds: dict[str, str] | None = None,
) -> AnalyticsReport:
    """Aggregate the survey into its four analysis views.

    ``task_kinds`` (task_id -> perturbation kind) enables the per-kind
    unanswerability ratios; it is optional because responses alone do not
    carry the kind.
    """
    label_by_task = {c.task_id: c.label for c in consensus}

    confidence_consensus = {
        conf: {v.value: 0 for v in ConsensusValue} for conf in range(1, 6)
    }
    interplay = {r.name: {a.name: 0 for a in UnanswerableAnswer} for r in Reason}
    for resp in responses:
        label = label_by_task.get(resp.task_id)
        if label is not None:
            confidence_consensus[resp.confidence][label.value] += 1
        if not resp.answerable and resp.reason and resp.unanswerable_answer:
            interplay[resp.reason.name][resp.unanswerable_answer.name] += 1

    by_task: dict[str, list[AnnotatorResponse]] = {}
    for resp in responses:
        by_task.setdefault(resp.task_id, []).append(resp)

    shift_counts: Counter[AnswerProvenance] = Counter()
    for c in consensus:
        if c.label is ConsensusValue.ANSWERABLE and c.task_id in by_task:
            choice = _winning_choice(by_task[c.task_id], c.label)
            if isinstance(choice, AnswerOption):
                shift_counts[choice.provenance] += 1
    shift_total = sum(shift_counts.values())
    answer_shift_pct = {
        p.value: (100.0 * shift_counts[p] / shift_total if shift_total else 0.0)
        for p in AnswerProvenance
    }

    unanswerability_ratio: dict[str, float] = {}
    if task_kinds:
        per_kind: dict[str, list[ConsensusLabel]] = {}
        for c in consensus:
            kind = task_kinds.get(c.task_id)
            if kind is not None and c.label is not ConsensusValue.NO_CONSENSUS:
                per_kind.setdefault(kind, []).append(c)
        for kind, labels in sorted(per_kind.items()):
            n_unanswerable = sum(
                1 for c in labels if c.label is ConsensusValue.UNANSWERABLE
            )
            unanswerability_ratio[kind] = n_unanswerable / len(labels)

    return AnalyticsReport(
        confidence_consensus=confidence_consensus,
        interplay=interplay,
        answer_shift_pct=answer_shift_pct,
        unanswerability_ratio=unanswerability_ratio,
        n_responses=len(responses),
        n_tasks=len(consensus),
    )
