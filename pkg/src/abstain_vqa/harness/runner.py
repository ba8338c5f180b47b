"""End-to-end probe execution: prompt build, client fan-out, parsing,
aggregation, and audit persistence."""

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..backends import ModelClient
from ..perturb.base import derive_seed
from .metrics import MetricReport, acc_binary, acc_open, normalize_prediction, weighted_f1
from .parsing import ParsedResponse, Verdict, parse_response
from .prompts import Protocol, ShotConfig, assemble_few_shot, build_prompt

logger = logging.getLogger(__name__)

__all__ = ["EvalItem", "RunResult", "run_eval", "render_report"]

UNANSWERABLE_OPTION = "unanswerable"


@dataclass
class EvalItem:
    """One evaluation instance with its gold labels."""

    id: str
    image_ref: str
    question: str
    answerable: bool
    valid_answers: list[str] = field(default_factory=list)
    options: list[str] = field(default_factory=list)  # original, baseline, random
    hint: str | None = None
    answer_type: str = "other"


@dataclass
class RunResult:
    report: MetricReport
    rows: list[dict]
    manifest: dict


def _query(client: ModelClient, prompt: str, image_ref: str, retries: int) -> tuple[str, bool]:
    """Call the client with up to ``retries`` retries; (reply, errored)."""
    last_exc: Exception | None = None
    for _ in range(retries + 1):
        try:
            return client.complete(prompt, image_ref), False
        except Exception as exc:  # client contract: any failure is retryable
            last_exc = exc
    logger.warning("client failed after %d attempts: %s", retries + 1, last_exc)
    return "", True


def _mc_options(item: EvalItem, seed: int) -> tuple[list[str], list[int]]:
    """The four MC options, seeded-shuffled per instance; permutation logged."""
    base = list(item.options) + [UNANSWERABLE_OPTION]
    if len(base) != 4:
        raise ValueError(f"{item.id}: MC needs 3 collected options, got {len(item.options)}")
    permutation = list(range(4))
    random.Random(derive_seed(seed, item.id)).shuffle(permutation)
    return [base[i] for i in permutation], permutation


def _prediction_text(parsed: ParsedResponse) -> str | None:
    if parsed.verdict is Verdict.UNANSWERABLE:
        return UNANSWERABLE_OPTION
    if parsed.choice_text is not None:
        return parsed.choice_text
    if parsed.answer_text is not None:
        return parsed.answer_text
    return None


def run_eval(
    items: list[EvalItem],
    client: ModelClient,
    protocol: Protocol,
    shots: ShotConfig | None = None,
    seed: int = 0,
    run_dir: str | Path | None = None,
    max_in_flight: int = 4,
    retries: int = 2,
) -> RunResult:
    """Probe the client over all items and aggregate every metric.

    Client failures mark the instance OoS-by-error and land in a separate
    error tally; every raw response is persisted under ``run_dir`` for audit.
    """
    if not items:
        raise ValueError("no evaluation items")

    prompts: list[str] = []
    mc_perms: list[list[int] | None] = []
    mc_opts: list[list[str] | None] = []
    for item in items:
        options = None
        permutation = None
        if protocol is Protocol.MC:
            options, permutation = _mc_options(item, seed)
        prompt = build_prompt(
            item.question,
            protocol,
            options=options,
            hint=item.hint if protocol is Protocol.OEH else None,
        )
        if shots is not None:
            prompt = assemble_few_shot(prompt, shots, protocol)
        prompts.append(prompt)
        mc_perms.append(permutation)
        mc_opts.append(options)

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        replies = list(
            pool.map(
                lambda pair: _query(client, pair[0], pair[1], retries),
                zip(prompts, (item.image_ref for item in items)),
            )
        )

    parsed: list[ParsedResponse] = []
    errors: list[bool] = []
    for (raw, errored), options in zip(replies, mc_opts):
        errors.append(errored)
        parsed.append(parse_response(raw, protocol, mc_options=options))

    report = _aggregate(items, parsed, errors, protocol)
    rows = [
        {
            "id": item.id,
            "prompt": prompt,
            "raw": p.raw,
            "verdict": p.verdict.value,
            "prediction": _prediction_text(p),
            "error": errored,
            "mc_permutation": perm,
        }
        for item, prompt, p, errored, perm in zip(items, prompts, parsed, errors, mc_perms)
    ]
    manifest = {
        "protocol": protocol.value,
        "seed": seed,
        "n_instances": len(items),
        "client": type(client).__name__,
        "shots": (
            {
                "n_answerable": shots.n_answerable,
                "n_unanswerable": shots.n_unanswerable,
                "seed": shots.seed,
            }
            if shots
            else None
        ),
    }
    if run_dir is not None:
        _persist(Path(run_dir), rows, manifest, report)
    return RunResult(report=report, rows=rows, manifest=manifest)


def _aggregate(
    items: list[EvalItem],
    parsed: list[ParsedResponse],
    errors: list[bool],
    protocol: Protocol,
) -> MetricReport:
    gold_answerable = [item.answerable for item in items]
    acc_b = acc_binary(parsed, gold_answerable)

    acc_o = None
    predictions = [_prediction_text(p) or "" for p in parsed]
    if protocol is not Protocol.BY:
        gold_open = [(item.valid_answers, not item.answerable) for item in items]
        acc_o = acc_open(predictions, gold_open)

    gold_labels = [
        UNANSWERABLE_OPTION
        if not item.answerable
        else normalize_prediction(item.valid_answers[0] if item.valid_answers else "")
        for item in items
    ]
    if protocol is Protocol.BY:
        pred_labels = []
        for p in parsed:
            answerable = p.predicted_answerable()
            pred_labels.append(
                "<oos>" if answerable is None else ("answerable" if answerable else UNANSWERABLE_OPTION)
            )
        gold_labels = [
            "answerable" if item.answerable else UNANSWERABLE_OPTION for item in items
        ]
    else:
        pred_labels = [
            "<oos>" if p.verdict is Verdict.OUT_OF_SCOPE else normalize_prediction(pred)
            for p, pred in zip(parsed, predictions)
        ]
    f1 = weighted_f1(pred_labels, gold_labels)

    n = len(items)
    n_errors = sum(errors)
    n_oos = sum(
        1
        for p, errored in zip(parsed, errors)
        if p.verdict is Verdict.OUT_OF_SCOPE and not errored
    )

    breakdown: dict[str, dict[str, float]] = {}
    for answer_type in sorted({item.answer_type for item in items} | {"all"}):
        idx = [
            i
            for i, item in enumerate(items)
            if answer_type == "all" or item.answer_type == answer_type
        ]
        sub_parsed = [parsed[i] for i in idx]
        sub_gold = [gold_answerable[i] for i in idx]
        entry = {"n": float(len(idx)), "acc_b": acc_binary(sub_parsed, sub_gold)}
        if protocol is not Protocol.BY:
            entry["acc_o"] = acc_open(
                [predictions[i] for i in idx],
                [(items[i].valid_answers, not items[i].answerable) for i in idx],
            )
        breakdown[answer_type] = entry

    return MetricReport(
        acc_b=acc_b,
        acc_o=acc_o,
        f1_weighted=f1,
        oos_ratio=n_oos / n,
        error_ratio=n_errors / n,
        n_instances=n,
        breakdown=breakdown,
    )


def _persist(run_dir: Path, rows: list[dict], manifest: dict, report: MetricReport) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    with (run_dir / "responses.jsonl").open("a", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2), encoding="utf-8"
    )
    (run_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2), encoding="utf-8"
    )


def render_report(rows: list[tuple[str, Protocol, MetricReport]]) -> str:
    """Plain-text table: one row per run, protocol metric columns in percent."""
    header = f"{'Run':<24} {'Proto':<6} {'Acc_b':>7} {'Acc_o':>7} {'F1^W':>7} {'OoS':>7} {'Err':>7} {'N':>6}"
    lines = [header, "-" * len(header)]

    def pct(value: float | None) -> str:
        return f"{100 * value:7.1f}" if value is not None else f"{'-':>7}"

    for name, protocol, report in rows:
        lines.append(
            f"{name:<24} {protocol.value:<6} {pct(report.acc_b)} {pct(report.acc_o)} "
            f"{pct(report.f1_weighted)} {pct(report.oos_ratio)} {pct(report.error_ratio)} "
            f"{report.n_instances:>6}"
        )
    return "\n".join(lines)
