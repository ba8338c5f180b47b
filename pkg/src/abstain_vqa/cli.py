"""Command-line entry points.

    abstain-vqa perturb   --config cfg.yaml [--out DIR] [--seed N] [--force]
    abstain-vqa annotate  export|serve|ingest|consensus ...
    abstain-vqa select    fit|calibrate|infer ...
    abstain-vqa eval      --config cfg.yaml --items items.jsonl ...
    abstain-vqa report    --run DIR [--run DIR ...]

Flags override config-file values; every command writes a manifest echoing
the effective configuration, seeds, and input hashes.
"""

import json
import logging
from pathlib import Path

import click

from . import annotation as ann
from . import data as dat
from . import selective as sel
from .backends import (
    BackendError,
    ConstantModelClient,
    FixtureDetector,
    LookupBaseline,
    LookupEmbedder,
    LookupLmScorer,
    RuleDependencyParser,
    RuleTableTagger,
    StubModelClient,
)
from .config import RunConfig, ensure_output_dir, load_config, write_manifest
from .harness import (
    EvalItem,
    ExemplarShot,
    Protocol,
    ShotConfig,
    render_report,
    run_eval,
)
from .harness.metrics import MetricReport
from .perturb import (
    ImageBackends,
    ImagePerturbConfig,
    TextBackends,
    TextPerturbConfig,
    perturb_image,
    perturb_text,
)
from .perturb.base import derive_seed
from .perturb.text import EmbeddingTable

logger = logging.getLogger(__name__)


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Unanswerable-VQA toolkit: perturb, annotate, select, evaluate."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_json(path: str | Path):
    with Path(path).open(encoding="utf-8") as fh:
        return json.load(fh)


def _text_backends(config: RunConfig) -> TextBackends:
    b = config.backends
    if b.embeddings_file is None or b.lm_scores_file is None:
        raise click.UsageError(
            "text perturbation needs backends.embeddings_file and backends.lm_scores_file"
        )
    baseline = None
    if b.baseline_answers_file is not None:
        baseline = LookupBaseline(_load_json(b.baseline_answers_file), b.baseline_default)
    return TextBackends(
        tagger=RuleTableTagger(),
        parser=RuleDependencyParser(),
        scorer=LookupLmScorer.from_json(b.lm_scores_file, default=b.lm_default_score),
        embeddings=EmbeddingTable.from_text_file(b.embeddings_file),
        baseline=baseline,
    )


def _image_backends(config: RunConfig, pool_refs: list[str]) -> ImageBackends:
    b = config.backends
    if b.image_embeddings_file is None or b.detections_file is None:
        raise click.UsageError(
            "image perturbation needs backends.image_embeddings_file and "
            "backends.detections_file"
        )
    baseline = None
    if b.baseline_answers_file is not None:
        baseline = LookupBaseline(_load_json(b.baseline_answers_file), b.baseline_default)
    return ImageBackends(
        embedder=LookupEmbedder.from_json(b.image_embeddings_file),
        detector=FixtureDetector.from_json(b.detections_file),
        tagger=RuleTableTagger(),
        pool_refs=pool_refs,
        baseline=baseline,
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--corpus", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--force", is_flag=True, help="Allow writing into a non-empty output dir.")
@click.option("--skip-text/--no-skip-text", default=False, show_default=True)
@click.option("--skip-image/--no-skip-image", default=False, show_default=True)
def perturb(config_path, corpus, out_dir, seed, force, skip_text, skip_image):
    """Run the full perturbation pipeline over a corpus."""
    overrides: dict = {}
    if corpus:
        overrides.setdefault("paths", {})["corpus"] = corpus
    if out_dir:
        overrides.setdefault("paths", {})["output"] = out_dir
    if seed is not None:
        overrides.setdefault("perturb", {})["seed"] = seed
    config = load_config(config_path, overrides)

    out = ensure_output_dir(config.paths.output, force=force)
    try:
        instances = dat.load_dataset(config.paths.corpus)
    except dat.DatasetError as exc:
        raise click.ClickException(str(exc))
    survivors = dat.filter_binary_answers(instances)

    records: list[dat.PerturbationRecord] = []
    skips: list[dict] = []

    text_backends = None if skip_text else _text_backends(config)
    text_config = TextPerturbConfig(
        epsilon=config.perturb.epsilon,
        k_neighbors=config.perturb.k_neighbors,
        negate=config.perturb.negate,
    )
    image_backends = (
        None
        if skip_image
        else _image_backends(config, pool_refs=[i.image_ref for i in survivors])
    )
    image_config = ImagePerturbConfig(
        alpha=config.perturb.alpha,
        top_n=config.perturb.top_n,
        detection_threshold=config.perturb.detection_threshold,
        per_object_cap=config.perturb.per_object_cap,
        seed=config.perturb.seed,
        scale_range=tuple(config.perturb.scale_range),
        output_dir=out / "images",
        image_root=config.paths.images,
        record_ref_base=out,
    )

    for inst in survivors:
        if text_backends is not None:
            try:
                outcome = perturb_text(inst, text_config, text_backends)
                records.extend(outcome.records)
                skips.extend(s.to_dict() for s in outcome.skips)
            except BackendError as exc:
                skips.append({"source_id": inst.id, "stage": "text", "reason": str(exc)})
        if image_backends is not None:
            try:
                outcome = perturb_image(inst, image_config, image_backends)
                records.extend(outcome.records)
                skips.extend(s.to_dict() for s in outcome.skips)
            except BackendError as exc:
                skips.append({"source_id": inst.id, "stage": "image", "reason": str(exc)})

    dat.save_records(records, out / "records.jsonl")
    report = {
        "instances": len(instances),
        "after_binary_filter": len(survivors),
        "records": len(records),
        "records_by_kind": _count_by(records, lambda r: r.kind.value),
        "skips": skips,
    }
    (out / "skip_report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    write_manifest(
        out,
        "perturb",
        config,
        inputs=[config.paths.corpus],
        extra={"records": len(records), "skips": len(skips)},
    )
    click.echo(
        f"perturb: {len(records)} records from {len(survivors)} instances "
        f"({len(instances) - len(survivors)} binary-filtered); "
        f"{len(skips)} skips -> {out}"
    )


def _count_by(items, key) -> dict[str, int]:
    counts: dict[str, int] = {}
    for item in items:
        counts[key(item)] = counts.get(key(item), 0) + 1
    return dict(sorted(counts.items()))


# ---------------------------------------------------------------------------
# annotate
# ---------------------------------------------------------------------------


@main.group()
def annotate():
    """Labeling workflow: export tasks, serve the UI API, ingest, consensus."""


def _load_exemplars(path: str | None) -> list[ann.Exemplar]:
    if path is None:
        return []
    return [
        ann.Exemplar(e["image"], e["question"], ann.Reason[e["reason"]])
        for e in _load_json(path)
    ]


@annotate.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--corpus", type=click.Path(exists=True), required=True)
@click.option("--records", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--force", is_flag=True)
def export(config_path, corpus, records, out_dir, seed, force):
    """Build annotation tasks from perturbation records; write CSV + JSONL."""
    config = load_config(config_path)
    if seed is not None:
        config.annotate.seed = seed
    out = ensure_output_dir(out_dir, force=force)
    instances = {i.id: i for i in dat.load_dataset(corpus)}
    recs = dat.load_records(records)
    exemplars = _load_exemplars(config.annotate.exemplars_file)

    baseline = None
    if config.backends.baseline_answers_file is not None:
        baseline = LookupBaseline(
            _load_json(config.backends.baseline_answers_file),
            config.backends.baseline_default,
        )

    tasks: list[ann.AnnotationTask] = []
    failures: list[dict] = []
    for rec in recs:
        source = instances.get(rec.source_id)
        if source is None:
            failures.append({"source_id": rec.source_id, "reason": "unknown source id"})
            continue
        baseline_answer = rec.baseline_answer
        if baseline_answer is None and baseline is not None:
            baseline_answer = baseline.answer(
                rec.perturbed_image_ref or source.image_ref,
                rec.perturbed_question or source.question,
            )
        if baseline_answer is None:
            failures.append({"source_id": rec.source_id, "reason": "no baseline answer"})
            continue
        try:
            tasks.append(
                ann.build_task(
                    rec,
                    source,
                    baseline_answer,
                    rng_seed=derive_seed(config.annotate.seed, rec.source_id, rec.kind.value),
                    corpus=list(instances.values()),
                    exemplars=exemplars,
                )
            )
        except ann.TaskBuildError as exc:
            failures.append({"source_id": rec.source_id, "reason": str(exc)})

    ann.export_tasks(tasks, out / "tasks.csv")
    with (out / "tasks.jsonl").open("w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.to_dict(), ensure_ascii=False) + "\n")
    if failures:
        (out / "export_failures.json").write_text(
            json.dumps(failures, indent=2), encoding="utf-8"
        )
    write_manifest(out, "annotate export", config, inputs=[corpus, records])
    click.echo(f"export: {len(tasks)} tasks ({len(failures)} failures) -> {out}")


@annotate.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--tasks", "tasks_path", type=click.Path(exists=True), required=True)
@click.option("--responses-out", type=click.Path(), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8765, show_default=True)
def serve(config_path, tasks_path, responses_out, host, port):
    """Serve the annotation API for the browser UI."""
    import uvicorn

    from .service import TaskStore, create_app, load_tasks_jsonl

    config = load_config(config_path)
    store = TaskStore(
        tasks=load_tasks_jsonl(tasks_path),
        annotations_per_task=config.annotate.annotations_per_task,
        lease_seconds=config.annotate.lease_seconds,
        responses_path=responses_out,
    )
    uvicorn.run(create_app(store), host=host, port=port, log_level="warning")


@annotate.command()
@click.option("--responses", "responses_csv", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def ingest(responses_csv, out_path):
    """Validate a response CSV; write accepted responses as JSONL."""
    result = ann.ingest_responses(responses_csv)
    with Path(out_path).open("w", encoding="utf-8") as fh:
        for resp in result.accepted:
            fh.write(json.dumps(resp.to_dict(), ensure_ascii=False) + "\n")
    for row_no, message in result.rejected:
        click.echo(f"reject row {row_no}: {message}", err=True)
    click.echo(f"ingest: {len(result.accepted)} accepted, {len(result.rejected)} rejected")


@annotate.command()
@click.option("--responses", "responses_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--analytics", "analytics_path", type=click.Path(), default=None)
def consensus(responses_path, out_path, analytics_path):
    """Majority-vote consensus (and optional analytics) over stored responses."""
    responses: list[ann.AnnotatorResponse] = []
    with Path(responses_path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                responses.append(ann.AnnotatorResponse.from_dict(json.loads(line)))

    by_task: dict[str, list[ann.AnnotatorResponse]] = {}
    for resp in responses:
        by_task.setdefault(resp.task_id, []).append(resp)

    labels: list[ann.ConsensusLabel] = []
    under_annotated: list[str] = []
    with Path(out_path).open("w", encoding="utf-8") as fh:
        for task_id in sorted(by_task):
            group = by_task[task_id]
            if len(group) < 3:
                under_annotated.append(task_id)
                continue
            label = ann.majority_vote(group)
            labels.append(label)
            entry = label.to_dict()
            if label.label is not ann.ConsensusValue.NO_CONSENSUS:
                entry["consensus_answer"] = ann.consensus_answer(group, label.label)
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    if analytics_path:
        # task ids carry their perturbation kind: "<source>:<kind>:<suffix>"
        kinds = {
            task_id: task_id.split(":")[1]
            for task_id in by_task
            if task_id.count(":") >= 2
        }
        report = ann.analytics(responses, labels, task_kinds=kinds)
        Path(analytics_path).write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )
    for task_id in under_annotated:
        click.echo(f"under-annotated (needs >= 3): {task_id}", err=True)
    click.echo(f"consensus: {len(labels)} tasks settled -> {out_path}")


# ---------------------------------------------------------------------------
# select
# ---------------------------------------------------------------------------


@main.group()
def select():
    """Selective prediction: fit heads, calibrate the threshold, infer."""


def _load_labels(path: str) -> dict[str, int | None]:
    return {str(k): v for k, v in _load_json(path).items()}


def _labelled_features(features_path: str, labels_path: str):
    features = sel.load_features(features_path)
    labels_by_id = _load_labels(labels_path)
    missing = [f.provenance for f in features if f.provenance not in labels_by_id]
    if missing:
        raise click.UsageError(f"labels missing for ids: {missing[:5]}")
    return features, [labels_by_id[f.provenance] for f in features]


@select.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--n-answers", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def fit(config_path, features_path, labels_path, n_answers, out_path):
    """Train the selective heads on precomputed fused features."""
    config = load_config(config_path)
    features, labels = _labelled_features(features_path, labels_path)
    heads = sel.fit_selective(
        features,
        labels,
        n_answers=n_answers,
        variant=sel.Variant(config.selective.variant),
        train=sel.TrainConfig(
            learning_rate=config.selective.learning_rate,
            epochs=config.selective.epochs,
            seed=config.selective.seed,
        ),
    )
    sel.save_heads(heads, out_path)
    write_manifest(
        Path(out_path).parent, "select fit", config, inputs=[features_path, labels_path]
    )
    click.echo(f"fit: heads saved -> {out_path}")


@select.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--heads", "heads_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def calibrate(config_path, features_path, labels_path, heads_path, out_path):
    """Sweep the threshold grid on a validation set; report the best theta."""
    config = load_config(config_path)
    features, labels = _labelled_features(features_path, labels_path)
    heads = sel.load_heads(heads_path)
    theta, curve = sel.calibrate_threshold(
        features,
        labels,
        heads,
        sel.Variant(config.selective.variant),
        grid=list(config.selective.grid),
    )
    Path(out_path).write_text(
        json.dumps(
            {
                "variant": config.selective.variant,
                "theta": theta,
                "curve": [{"theta": t, "acc_o": a} for t, a in curve],
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    click.echo(f"calibrate: theta = {theta} -> {out_path}")


@select.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--heads", "heads_path", type=click.Path(exists=True), required=True)
@click.option("--theta", type=float, default=None, help="Override config theta.")
@click.option("--out", "out_path", type=click.Path(), required=True)
def infer(config_path, features_path, heads_path, theta, out_path):
    """Selective inference: answer id or abstention per feature row."""
    config = load_config(config_path)
    variant = sel.Variant(config.selective.variant)
    sconfig = sel.SelectiveConfig(
        variant=variant,
        theta=config.selective.theta if theta is None else theta,
    )
    features = sel.load_features(features_path)
    heads = sel.load_heads(heads_path)
    n_abstained = 0
    with Path(out_path).open("w", encoding="utf-8") as fh:
        for feature in features:
            dist = sel.predict_answer(feature, heads.answer_head)
            confidence = sel.selective_confidence(feature, dist, heads, variant)
            output = sel.select(dist, confidence, sconfig)
            n_abstained += output.abstained
            fh.write(
                json.dumps(
                    {
                        "id": feature.provenance,
                        "result": output.result,
                        "abstained": output.abstained,
                        "confidence": output.confidence,
                    }
                )
                + "\n"
            )
    click.echo(f"infer: {len(features)} rows, {n_abstained} abstentions -> {out_path}")


# ---------------------------------------------------------------------------
# eval / report
# ---------------------------------------------------------------------------


def _load_items(path: str | Path) -> list[EvalItem]:
    items = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            items.append(
                EvalItem(
                    id=str(obj["id"]),
                    image_ref=obj.get("image", ""),
                    question=obj["question"],
                    answerable=bool(obj["answerable"]),
                    valid_answers=list(obj.get("valid_answers", [])),
                    options=list(obj.get("options", [])),
                    hint=obj.get("hint"),
                    answer_type=obj.get("answer_type", "other"),
                )
            )
    return items


def _gold_reply(item: EvalItem, protocol: Protocol) -> str:
    if protocol is Protocol.BY:
        return "answerable" if item.answerable else "unanswerable"
    if not item.answerable:
        return "unanswerable"
    return item.valid_answers[0] if item.valid_answers else ""


def _build_client(spec: str, items: list[EvalItem], protocol: Protocol):
    if spec == "echo":
        replies = {item.image_ref: _gold_reply(item, protocol) for item in items}
        return StubModelClient(lambda prompt, ref: replies[ref])
    if spec.startswith("constant:"):
        return ConstantModelClient(spec.split(":", 1)[1])
    if spec == "constant":
        return ConstantModelClient("")
    if spec.startswith("lookup:"):
        replies = _load_json(spec.split(":", 1)[1])
        return StubModelClient(lambda prompt, ref: replies[ref])
    raise click.UsageError(f"unknown model client spec {spec!r}")


def _shot_config(config: RunConfig, items: list[EvalItem], protocol: Protocol) -> ShotConfig | None:
    shots = config.eval.shots
    if shots.n_answerable + shots.n_unanswerable == 0:
        return None
    if shots.pool_file is not None:
        pool = [
            ExemplarShot(
                question=e["question"],
                answerable=bool(e["answerable"]),
                response=e["response"],
                options=e.get("options"),
                hint=e.get("hint"),
            )
            for e in _load_json(shots.pool_file)
        ]
    else:
        pool = [
            ExemplarShot(
                question=item.question,
                answerable=item.answerable,
                response=_gold_reply(item, protocol),
                options=(list(item.options) + ["unanswerable"]) if item.options else None,
                hint=item.hint,
            )
            for item in items
        ]
    return ShotConfig(
        n_answerable=shots.n_answerable,
        n_unanswerable=shots.n_unanswerable,
        pool=pool,
        seed=shots.seed,
    )


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--items", "items_path", type=click.Path(exists=True), required=True)
@click.option("--run-dir", type=click.Path(), required=True)
@click.option("--protocol", type=click.Choice([p.value for p in Protocol]), default=None)
@click.option("--force", is_flag=True)
def eval_cmd(config_path, items_path, run_dir, protocol, force):
    """Probe a model client over an item set and report all metrics."""
    config = load_config(config_path)
    proto = Protocol(protocol or config.eval.protocol)
    items = _load_items(items_path)
    client = _build_client(config.eval.model_client, items, proto)
    shots = _shot_config(config, items, proto)
    out = ensure_output_dir(run_dir, force=force)

    result = run_eval(
        items,
        client,
        proto,
        shots=shots,
        seed=config.eval.seed,
        run_dir=out,
        max_in_flight=config.eval.max_in_flight,
        retries=config.eval.retries,
    )
    write_manifest(
        out,
        "eval",
        config,
        inputs=[items_path],
        extra={"run": result.manifest},
    )
    click.echo(render_report([("run", proto, result.report)]))


@main.command()
@click.option("--run", "run_dirs", type=click.Path(exists=True), multiple=True, required=True)
def report(run_dirs):
    """Render stored MetricReport files as a plain-text table."""
    rows = []
    for run_dir in run_dirs:
        run_path = Path(run_dir)
        report_data = _load_json(run_path / "report.json")
        manifest = _load_json(run_path / "manifest.json")
        run_manifest = manifest.get("run", manifest)
        rows.append(
            (
                run_path.name,
                Protocol(run_manifest.get("protocol", "BY")),
                MetricReport(**report_data),
            )
        )
    click.echo(render_report(rows))


if __name__ == "__main__":
    main()
