"""Command-line pipeline: perturb, annotate, select, eval, report."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from abstain_vqa.cli import main
from abstain_vqa.data import load_records

from pipeline_fixture import make_eval_items, make_pipeline_fixture


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def pipeline(tmp_path):
    return make_pipeline_fixture(tmp_path)


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestPerturbCommand:
    def test_deterministic_record_set(self, runner, pipeline, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        run_ok(runner, ["perturb", "--config", str(pipeline["config"]), "--out", str(out_a)])
        run_ok(runner, ["perturb", "--config", str(pipeline["config"]), "--out", str(out_b)])
        records_a = (out_a / "records.jsonl").read_text()
        records_b = (out_b / "records.jsonl").read_text()
        assert records_a == records_b
        assert len(load_records(out_a / "records.jsonl")) > 0
        images_a = sorted(p.name for p in (out_a / "images").iterdir())
        assert images_a == sorted(p.name for p in (out_b / "images").iterdir())
        for name in images_a:
            assert (out_a / "images" / name).read_bytes() == (out_b / "images" / name).read_bytes()
        assert (out_a / "manifest.json").exists()
        assert (out_a / "skip_report.json").exists()

    def test_binary_only_corpus_zero_records(self, runner, tmp_path):
        from abstain_vqa.data import AnswerType, VqaInstance, save_dataset

        fixture = make_pipeline_fixture(tmp_path)
        only_binary = [
            VqaInstance("b1", "img1.png", "Is it red?", ["yes"], "is it", AnswerType.YES_NO)
        ]
        save_dataset(only_binary, fixture["corpus"])
        out = tmp_path / "obin"
        result = run_ok(
            runner, ["perturb", "--config", str(fixture["config"]), "--out", str(out)]
        )
        assert load_records(out / "records.jsonl") == []
        report = json.loads((out / "skip_report.json").read_text())
        assert report["after_binary_filter"] == 0
        assert "binary-filtered" in result.output

    def test_missing_image_isolated(self, runner, pipeline, tmp_path):
        (pipeline["images"] / "img3.png").unlink()
        out = tmp_path / "miss"
        run_ok(runner, ["perturb", "--config", str(pipeline["config"]), "--out", str(out)])
        records = load_records(out / "records.jsonl")
        assert records, "other instances must still produce records"
        report = json.loads((out / "skip_report.json").read_text())
        assert any(
            s["source_id"] == "c3" and "no such image" in s["reason"] for s in report["skips"]
        )

    def test_refuses_nonempty_output_without_force(self, runner, pipeline, tmp_path):
        out = tmp_path / "busy"
        out.mkdir()
        (out / "existing.txt").write_text("hello")
        result = runner.invoke(
            main, ["perturb", "--config", str(pipeline["config"]), "--out", str(out)]
        )
        assert result.exit_code != 0
        run_ok(
            runner,
            ["perturb", "--config", str(pipeline["config"]), "--out", str(out), "--force"],
        )


class TestAnnotateCommands:
    def test_export_ingest_consensus_round_trip(self, runner, pipeline, tmp_path):
        out = tmp_path / "perturbed"
        run_ok(runner, ["perturb", "--config", str(pipeline["config"]), "--out", str(out)])
        ann_dir = tmp_path / "annotation"
        run_ok(
            runner,
            [
                "annotate",
                "export",
                "--config",
                str(pipeline["config"]),
                "--corpus",
                str(pipeline["corpus"]),
                "--records",
                str(out / "records.jsonl"),
                "--out",
                str(ann_dir),
            ],
        )
        tasks = [
            json.loads(line)
            for line in (ann_dir / "tasks.jsonl").read_text().splitlines()
        ]
        assert tasks and all(len(t["answer_options"]) == 3 for t in tasks)

        # three workers answer the first task: two unanswerable, one answerable
        from abstain_vqa.annotation import (
            AlteredElement,
            AnnotatorResponse,
            AnswerOption,
            AnswerProvenance,
            Reason,
            UnanswerableAnswer,
            save_responses,
        )

        task = tasks[0]
        responses = [
            AnnotatorResponse(
                task["task_id"], "w1", False, 4, reason=Reason.R3,
                unanswerable_answer=UnanswerableAnswer.A2,
            ),
            AnnotatorResponse(
                task["task_id"], "w2", False, 5, reason=Reason.R1,
                unanswerable_answer=UnanswerableAnswer.A2,
            ),
            AnnotatorResponse(
                task["task_id"], "w3", True, 2,
                altered_element=AlteredElement.QUESTION,
                chosen_answer=AnswerOption(
                    task["answer_options"][0]["text"], AnswerProvenance.ORIGINAL
                ),
            ),
        ]
        csv_path = tmp_path / "responses.csv"
        save_responses(responses, csv_path)
        jsonl_path = tmp_path / "responses.jsonl"
        result = run_ok(
            runner,
            ["annotate", "ingest", "--responses", str(csv_path), "--out", str(jsonl_path)],
        )
        assert "3 accepted, 0 rejected" in result.output

        consensus_path = tmp_path / "consensus.jsonl"
        analytics_path = tmp_path / "analytics.json"
        run_ok(
            runner,
            [
                "annotate",
                "consensus",
                "--responses",
                str(jsonl_path),
                "--out",
                str(consensus_path),
                "--analytics",
                str(analytics_path),
            ],
        )
        labels = [json.loads(l) for l in consensus_path.read_text().splitlines()]
        assert labels[0]["label"] == "unanswerable"
        assert labels[0]["consensus_answer"] == "I don't know"
        analytics = json.loads(analytics_path.read_text())
        assert analytics["n_responses"] == 3

    def test_ingest_rejects_bad_rows(self, runner, tmp_path):
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text(
            "task_id,worker_id,answerable,reason,unanswerable_answer,"
            "altered_element,chosen_answer,chosen_provenance,confidence\n"
            "t1,w1,true,R1,,,red,original,4\n"  # answerable with a reason
        )
        result = run_ok(
            runner,
            ["annotate", "ingest", "--responses", str(csv_path), "--out", str(tmp_path / "o.jsonl")],
        )
        assert "0 accepted, 1 rejected" in result.output
        assert "reject row 2" in result.output


class TestSelectCommands:
    @pytest.fixture
    def artifacts(self, tmp_path):
        from abstain_vqa.selective import FusedFeature, save_features

        rng = np.random.default_rng(0)
        features = [
            FusedFeature(rng.normal(3.0, 0.3, size=2), provenance=f"a{i}") for i in range(10)
        ]
        features += [
            FusedFeature(rng.normal(-3.0, 0.3, size=2), provenance=f"u{i}") for i in range(10)
        ]
        labels = {f"a{i}": 0 for i in range(10)} | {f"u{i}": None for i in range(10)}
        features_path = tmp_path / "features.bin"
        save_features(features, features_path)
        labels_path = tmp_path / "labels.json"
        labels_path.write_text(json.dumps(labels))
        return features_path, labels_path

    def test_fit_calibrate_infer(self, runner, tmp_path, artifacts):
        features_path, labels_path = artifacts
        heads_path = tmp_path / "heads.json"
        run_ok(
            runner,
            [
                "select", "fit",
                "--features", str(features_path),
                "--labels", str(labels_path),
                "--n-answers", "2",
                "--out", str(heads_path),
            ],
        )
        assert heads_path.exists() and heads_path.with_suffix(".bin").exists()

        calib_path = tmp_path / "calibration.json"
        run_ok(
            runner,
            [
                "select", "calibrate",
                "--features", str(features_path),
                "--labels", str(labels_path),
                "--heads", str(heads_path),
                "--out", str(calib_path),
            ],
        )
        calibration = json.loads(calib_path.read_text())
        assert len(calibration["curve"]) == 9

        infer_path = tmp_path / "outputs.jsonl"
        run_ok(
            runner,
            [
                "select", "infer",
                "--features", str(features_path),
                "--heads", str(heads_path),
                "--theta", str(calibration["theta"]),
                "--out", str(infer_path),
            ],
        )
        outputs = [json.loads(l) for l in infer_path.read_text().splitlines()]
        assert len(outputs) == 20
        abstained = {o["id"] for o in outputs if o["abstained"]}
        assert abstained == {f"u{i}" for i in range(10)}

    def test_infer_ent_uniform_all_abstain(self, runner, tmp_path):
        from abstain_vqa.selective import (
            FusedFeature,
            LinearSoftmaxHead,
            SelectiveHeads,
            save_features,
            save_heads,
        )

        # zero head -> uniform distributions -> entropy ln 4 above theta
        features = [FusedFeature(np.ones(2), provenance=f"x{i}") for i in range(5)]
        features_path = tmp_path / "f.bin"
        save_features(features, features_path)
        heads = SelectiveHeads(LinearSoftmaxHead(np.zeros((2, 4)), np.zeros(4)))
        heads_path = tmp_path / "h.json"
        save_heads(heads, heads_path)
        config_path = tmp_path / "cfg.yaml"
        config_path.write_text("selective:\n  variant: ENT\n  theta: 1.0\n")
        out_path = tmp_path / "o.jsonl"
        result = run_ok(
            runner,
            [
                "select", "infer",
                "--config", str(config_path),
                "--features", str(features_path),
                "--heads", str(heads_path),
                "--out", str(out_path),
            ],
        )
        assert "5 abstentions" in result.output


class TestEvalCommand:
    def test_echo_stub_perfect(self, runner, tmp_path):
        items_path = make_eval_items(tmp_path)
        run_dir = tmp_path / "run"
        result = run_ok(
            runner,
            ["eval", "--items", str(items_path), "--run-dir", str(run_dir)],
        )
        report = json.loads((run_dir / "report.json").read_text())
        assert report["acc_b"] == 1.0
        assert report["oos_ratio"] == 0.0
        assert "Acc_b" in result.output

    def test_two_shot_manifest(self, runner, tmp_path):
        items_path = make_eval_items(tmp_path, n_answerable=4, n_unanswerable=4)
        config_path = tmp_path / "cfg.yaml"
        config_path.write_text(
            "eval:\n  shots:\n    n_answerable: 1\n    n_unanswerable: 1\n    seed: 3\n"
        )
        run_dir = tmp_path / "run2"
        run_ok(
            runner,
            [
                "eval",
                "--config", str(config_path),
                "--items", str(items_path),
                "--run-dir", str(run_dir),
            ],
        )
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["run"]["shots"] == {"n_answerable": 1, "n_unanswerable": 1, "seed": 3}

    def test_report_command(self, runner, tmp_path):
        items_path = make_eval_items(tmp_path)
        run_dir = tmp_path / "run"
        run_ok(runner, ["eval", "--items", str(items_path), "--run-dir", str(run_dir)])
        result = run_ok(runner, ["report", "--run", str(run_dir)])
        assert "BY" in result.output and "100.0" in result.output
