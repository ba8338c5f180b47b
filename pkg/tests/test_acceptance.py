"""Acceptance suite: one test per primary criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` for one pass/fail line per
criterion.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from abstain_vqa.annotation import majority_vote, ConsensusValue, analytics
from abstain_vqa.backends import LookupLmScorer, StubModelClient
from abstain_vqa.cli import main as cli_main
from abstain_vqa.data import load_records, split_dataset, VqaInstance
from abstain_vqa.harness import (
    ExemplarShot,
    Protocol,
    ShotConfig,
    assemble_few_shot,
    build_prompt,
    run_eval,
)
from abstain_vqa.harness.metrics import weighted_f1
from abstain_vqa.perturb.image import (
    BBox,
    ConceptSet,
    copy_move_object,
    load_image,
    mask_object,
    overlap_score,
    save_png,
)
from abstain_vqa.perturb.text import (
    DEFAULT_EPSILON,
    ReplacementCandidate,
    filter_by_perplexity,
)
from abstain_vqa.selective import (
    AnswerDistribution,
    FusedFeature,
    LinearSoftmaxHead,
    SelectiveConfig,
    SelectiveHeads,
    Variant,
    calibrate_threshold,
    entropy,
    fit_selective,
    predict_answer,
    select,
    uniform_target,
)

from pipeline_fixture import make_eval_items, make_pipeline_fixture
from test_annotation import answerable_response, unanswerable_response
from test_harness import make_items, echo_client, oracle_weighted_f1
from test_image_perturb import oracle_overlap


def test_c01_lm_filter_soundness():
    """Emitted candidate set equals {Q' : LM(Q') - LM(Q) <= 0.4} exactly."""
    assert DEFAULT_EPSILON == 0.4
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    mismatches = 0
    for case in range(100):
        base = float(rng.uniform(5, 50))
        scores = {"original": base}
        candidates = []
        expected = set()
        for j in range(int(rng.integers(1, 30))):
            name = f"case{case}-cand{j}"
            delta = float(rng.uniform(-1.0, 1.5))
            scores[name] = base + delta
            candidates.append(ReplacementCandidate("w", name, name))
            if delta <= 0.4:
                expected.add(name)
        kept = filter_by_perplexity(
            "original", candidates, LookupLmScorer(scores), epsilon=DEFAULT_EPSILON
        )
        if {c.candidate_question for c in kept} != expected:
            mismatches += 1
    elapsed = time.perf_counter() - start
    assert mismatches == 0
    assert elapsed < 1.0
    print(f"PASS criterion 1: LM filter soundness (100 sets, 0 mismatches, {elapsed:.3f}s)")


def test_c02_overlap_score_oracle():
    """Overlap score matches the brute-force oracle to 1e-12 with bounds."""
    rng = np.random.default_rng(202)
    labels = [f"l{i}" for i in range(15)]
    start = time.perf_counter()
    for _ in range(200):
        anchor = {labels[i] for i in rng.choice(15, int(rng.integers(0, 10)), replace=False)}
        cand = {labels[i] for i in rng.choice(15, int(rng.integers(1, 10)), replace=False)}
        concepts = ConceptSet(
            frozenset(labels[i] for i in rng.choice(15, int(rng.integers(0, 8)), replace=False))
        )
        alpha = float(rng.uniform(0.05, 4.0))
        value = overlap_score(anchor, cand, concepts, alpha).value
        assert abs(value - oracle_overlap(anchor, cand, concepts, alpha)) <= 1e-12
        assert 0.0 <= value <= alpha + 1.0
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    print(f"PASS criterion 2: overlap-score oracle equivalence (200 triples, {elapsed:.3f}s)")


def test_c03_mask_and_copy_move_contracts(tmp_path):
    """Mask zeroes inside/identical outside; copy-move source disjoint; PNG exact."""
    rng = np.random.default_rng(303)
    image = rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
    bbox = BBox(4, 6, 7, 5)

    masked = mask_object(image, bbox)
    assert not masked[6:11, 4:11].any()
    outside = np.ones(image.shape[:2], dtype=bool)
    outside[6:11, 4:11] = False
    assert np.array_equal(masked[outside], image[outside])
    mask_png = tmp_path / "mask.png"
    save_png(masked, mask_png)
    assert np.array_equal(load_image(mask_png), masked)

    relevant = [bbox, BBox(15, 15, 6, 6)]
    for seed in range(50):
        moved, source = copy_move_object(image, bbox, relevant, seed=seed)
        assert not any(source.intersects(b) for b in relevant)
        assert np.array_equal(moved[outside], image[outside])
    move_png = tmp_path / "move.png"
    save_png(moved, move_png)
    assert np.array_equal(load_image(move_png), moved)
    print("PASS criterion 3: mask/copy-move contracts (50 seeded fixtures, PNG exact)")


def test_c04_split_reproduction():
    """10,000 instances at (0.7, 0.1, 0.2) split exactly 7000/1000/2000."""
    instances = [
        VqaInstance(f"i{k}", f"img{k}.png", f"What is item {k}?", [f"a{k}"])
        for k in range(10_000)
    ]
    first = split_dataset(instances, (0.7, 0.1, 0.2), seed=42)
    sizes = (len(first.train_ids), len(first.valid_ids), len(first.test_ids))
    assert sizes == (7000, 1000, 2000)
    second = split_dataset(instances, (0.7, 0.1, 0.2), seed=42)
    assert (first.train_ids, first.valid_ids, first.test_ids) == (
        second.train_ids,
        second.valid_ids,
        second.test_ids,
    )
    print("PASS criterion 4: split reproduction (7000/1000/2000, deterministic)")


def test_c05_consensus_and_analytics():
    """All 3-vote combinations; 35.7%/43.6% answer-shift fixture to 0.1."""
    for votes in itertools.product([True, False], repeat=3):
        responses = [
            answerable_response(worker=f"w{i}") if v else unanswerable_response(worker=f"w{i}")
            for i, v in enumerate(votes)
        ]
        label = majority_vote(responses).label
        expected = (
            ConsensusValue.ANSWERABLE if sum(votes) >= 2 else ConsensusValue.UNANSWERABLE
        )
        assert label is expected

    from abstain_vqa.annotation import AnswerProvenance

    responses, consensus = [], []
    composition = [
        (AnswerProvenance.ORIGINAL, 357),
        (AnswerProvenance.BASELINE, 436),
        (AnswerProvenance.RANDOM, 207),
    ]
    idx = 0
    for provenance, count in composition:
        for _ in range(count):
            task_id = f"t{idx}:T-1:000000"
            group = [
                answerable_response(task_id, f"w{idx}a", provenance=provenance),
                answerable_response(task_id, f"w{idx}b", provenance=provenance),
                unanswerable_response(task_id, f"w{idx}c"),
            ]
            responses.extend(group)
            consensus.append(majority_vote(group))
            idx += 1
    report = analytics(responses, consensus)
    assert report.answer_shift_pct["original"] == pytest.approx(35.7, abs=0.1)
    assert report.answer_shift_pct["baseline"] == pytest.approx(43.6, abs=0.1)
    print("PASS criterion 5: consensus truth table + 35.7/43.6 answer shift")


def test_c06_metrics():
    """F1 oracle to 1e-9; 58/100 -> 58.0%; 40.9% correct with 10.4% OoS."""
    rng = np.random.default_rng(606)
    for _ in range(100):
        n = int(rng.integers(5, 60))
        gold = rng.integers(0, 5, size=n).tolist()
        preds = rng.integers(0, 5, size=n).tolist()
        assert weighted_f1(preds, gold) == pytest.approx(
            oracle_weighted_f1(preds, gold), abs=1e-9
        )

    items_100 = make_items(100, 0)
    replies = {
        item.image_ref: ("answerable" if i < 58 else "unanswerable")
        for i, item in enumerate(items_100)
    }
    result = run_eval(items_100, StubModelClient(lambda p, r: replies[r]), Protocol.BY)
    assert 100 * result.report.acc_b == pytest.approx(58.0)

    items_1000 = make_items(1000, 0)
    scripted = {}
    for i, item in enumerate(items_1000):
        if i < 409:
            scripted[item.image_ref] = "answerable"
        elif i < 409 + 104:
            scripted[item.image_ref] = ""  # out-of-scope
        else:
            scripted[item.image_ref] = "unanswerable"
    result = run_eval(items_1000, StubModelClient(lambda p, r: scripted[r]), Protocol.BY)
    assert 100 * result.report.acc_b == pytest.approx(40.9)
    assert 100 * result.report.oos_ratio == pytest.approx(10.4)
    print("PASS criterion 6: weighted-F1 oracle, 58.0% fixture, 40.9/10.4 report")


def test_c07_selective_prediction():
    """Entropy bounds, coverage monotonicity, uniform-target training, calibration."""
    for n in (2, 3, 7, 50):
        one_hot = np.zeros(n)
        one_hot[0] = 1.0
        assert abs(entropy(one_hot)) <= 1e-12
        assert abs(entropy(uniform_target(n).probs) - math.log(n)) <= 1e-12

    rng = np.random.default_rng(707)
    for _ in range(1000):
        raw = rng.uniform(0.01, 1.0, size=int(rng.integers(2, 9)))
        probs = raw / raw.sum()
        dist = AnswerDistribution(probs, logits=np.log(probs))
        theta_lo = float(rng.uniform(-4, 4))
        theta_hi = theta_lo + float(rng.uniform(0, 4))
        cls_conf = float(rng.uniform(0, 1))
        for variant, conf in (
            (Variant.CLS, cls_conf),
            (Variant.MAXLOGIT, float(dist.logits.max())),
        ):
            lo = select(dist, conf, SelectiveConfig(variant, theta_lo))
            hi = select(dist, conf, SelectiveConfig(variant, theta_hi))
            assert not (lo.abstained and not hi.abstained)
        h = entropy(dist.probs)
        ent_lo = select(dist, h, SelectiveConfig(Variant.ENT, theta_lo))
        ent_hi = select(dist, h, SelectiveConfig(Variant.ENT, theta_hi))
        assert not (ent_hi.abstained and not ent_lo.abstained)

    features = [FusedFeature(x) for x in rng.normal(size=(40, 3))]
    heads = fit_selective(features, [None] * 40, n_answers=5, variant=Variant.ENT)
    mean_entropy = float(
        np.mean([entropy(predict_answer(f, heads.answer_head).probs) for f in features])
    )
    assert math.log(5) - mean_entropy < 0.05

    sep_heads = SelectiveHeads(
        answer_head=LinearSoftmaxHead(np.array([[1.0, 0.0]]), np.zeros(2))
    )
    sep_features = [FusedFeature(np.array([v])) for v in (2.5, 3.5, 1.5, 0.5)]
    theta, _ = calibrate_threshold(
        sep_features, [0, 0, None, None], sep_heads, Variant.MAXLOGIT, [1.0, 2.0, 3.0]
    )
    assert theta == 2.0
    print("PASS criterion 7: selective prediction (bounds, monotonicity, training, calibration)")


def test_c08_prompt_templates_and_shots():
    """Golden templates byte-exact; shot compositions honored exactly."""
    from pathlib import Path

    golden = Path(__file__).parent / "golden"
    question = "What is under the bridge?"
    options = ["boat", "water", "rocks", "unanswerable"]
    hint = "the image lacks important concepts"
    assert build_prompt(question, Protocol.BY) == golden.joinpath("by.txt").read_text()
    assert (
        build_prompt(question, Protocol.MC, options=options)
        == golden.joinpath("mc.txt").read_text()
    )
    assert build_prompt(question, Protocol.OE) == golden.joinpath("oe.txt").read_text()
    oeh = build_prompt(question, Protocol.OEH, hint=hint)
    assert oeh == golden.joinpath("oeh.txt").read_text()
    assert "you can simply reply ``unanswerable''" in oeh

    pool = [
        ExemplarShot(f"What colour is item {i}?", True, "answerable") for i in range(6)
    ] + [ExemplarShot(f"What is missing from {i}?", False, "unanswerable") for i in range(6)]
    for n_ans, n_una in [(0, 0), (0, 1), (1, 2), (0, 3), (3, 0), (1, 4), (0, 5), (5, 0)]:
        shots = ShotConfig(n_ans, n_una, pool, seed=8)
        text = assemble_few_shot(build_prompt(question, Protocol.BY), shots, Protocol.BY)
        if n_ans + n_una == 0:
            assert text == build_prompt(question, Protocol.BY)
            continue
        blocks = text.split("\n\n")
        gold = [b.splitlines()[-1] for b in blocks[:-1]]
        assert gold.count("answerable") == n_ans
        assert gold.count("unanswerable") == n_una
    print("PASS criterion 8: prompt templates byte-exact; shot compositions honored")


def test_c09_end_to_end_smoke(tmp_path):
    """CLI perturb determinism and echo-stub eval at 100%/0%."""
    start = time.perf_counter()
    runner = CliRunner()
    fixture = make_pipeline_fixture(tmp_path)
    out_a, out_b = tmp_path / "run_a", tmp_path / "run_b"
    for out in (out_a, out_b):
        result = runner.invoke(
            cli_main,
            ["perturb", "--config", str(fixture["config"]), "--out", str(out)],
            catch_exceptions=False,
        )
        assert result.exit_code == 0, result.output
    assert (out_a / "records.jsonl").read_text() == (out_b / "records.jsonl").read_text()
    records = load_records(out_a / "records.jsonl")
    assert records

    items = make_eval_items(tmp_path)
    run_dir = tmp_path / "eval_run"
    result = runner.invoke(
        cli_main,
        ["eval", "--items", str(items), "--run-dir", str(run_dir)],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    report = json.loads((run_dir / "report.json").read_text())
    assert report["acc_b"] == 1.0
    assert report["oos_ratio"] == 0.0
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(
        f"PASS criterion 9: end-to-end smoke ({len(records)} deterministic records, "
        f"acc_b=100%, oos=0%, {elapsed:.2f}s)"
    )
