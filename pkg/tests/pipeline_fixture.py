"""A self-contained 5-instance corpus with stub backend files, shared by the
CLI tests and the end-to-end acceptance smoke."""

import json
from pathlib import Path

import numpy as np

from abstain_vqa.data import AnswerType, VqaInstance, save_dataset
from abstain_vqa.perturb.image import save_png

EMBEDDINGS = """\
bridge 1.0 0.0 0.1
tunnel 0.95 0.05 0.1
car 0.8 0.6 0.0
truck 0.78 0.62 0.0
cat 0.0 1.0 0.0
cats 0.01 0.99 0.0
dog 0.05 0.98 0.0
dogs 0.06 0.97 0.0
sink 0.0 0.1 1.0
color 0.3 0.3 0.3
"""


def make_corpus():
    return [
        VqaInstance("c1", "img1.png", "What is under the bridge?", ["boat"], "what is"),
        VqaInstance("c2", "img2.png", "What color is the car?", ["red"], "what color"),
        VqaInstance("c3", "img3.png", "What is the cat on?", ["sink"], "what is"),
        VqaInstance(
            "c4", "img4.png", "Is the man running?", ["yes"], "is the", AnswerType.YES_NO
        ),
        VqaInstance(
            "c5", "img5.png", "How many dogs are there?", ["2"], "how many", AnswerType.NUMBER
        ),
    ]


def make_pipeline_fixture(root: Path) -> dict:
    """Write corpus, images, and every stub backend file under ``root``."""
    root = Path(root)
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)

    corpus = make_corpus()
    corpus_path = root / "corpus.jsonl"
    save_dataset(corpus, corpus_path)

    rng = np.random.default_rng(99)
    for inst in corpus:
        save_png(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8), images / inst.image_ref)

    (root / "embeddings.txt").write_text(EMBEDDINGS, encoding="utf-8")

    lm_scores = {inst.question: 10.0 for inst in corpus}
    (root / "lm_scores.json").write_text(json.dumps(lm_scores), encoding="utf-8")

    image_embeddings = {
        "img1.png": [1.0, 0.0, 0.0],
        "img2.png": [0.9, 0.3, 0.0],
        "img3.png": [0.0, 1.0, 0.0],
        "img5.png": [0.0, 0.9, 0.4],
    }
    (root / "image_embeddings.json").write_text(
        json.dumps(image_embeddings), encoding="utf-8"
    )

    detections = {
        "img1.png": [["bridge", [2, 2, 6, 4], 0.9], ["water", [0, 10, 16, 6], 0.8]],
        "img2.png": [["car", [3, 3, 8, 6], 0.95], ["road", [0, 12, 16, 4], 0.8]],
        "img3.png": [["cat", [2, 2, 4, 4], 0.9], ["sink", [10, 8, 5, 4], 0.8]],
        "img5.png": [["dog", [1, 1, 5, 5], 0.9], ["grass", [0, 10, 16, 6], 0.7]],
    }
    (root / "detections.json").write_text(json.dumps(detections), encoding="utf-8")

    (root / "baseline_answers.json").write_text(json.dumps({}), encoding="utf-8")

    config = f"""\
paths:
  corpus: {corpus_path}
  images: {images}
  output: {root / "out"}
perturb:
  epsilon: 0.4
  k_neighbors: 2
  seed: 7
backends:
  embeddings_file: {root / "embeddings.txt"}
  lm_scores_file: {root / "lm_scores.json"}
  lm_default_score: 10.3
  image_embeddings_file: {root / "image_embeddings.json"}
  detections_file: {root / "detections.json"}
  baseline_answers_file: {root / "baseline_answers.json"}
  baseline_default: almost certainly
"""
    config_path = root / "config.yaml"
    config_path.write_text(config, encoding="utf-8")
    return {
        "root": root,
        "config": config_path,
        "corpus": corpus_path,
        "images": images,
        "out": root / "out",
    }


def make_eval_items(root: Path, n_answerable=3, n_unanswerable=2) -> Path:
    """An eval item JSONL with gold labels for echo-stub runs."""
    rows = []
    for i in range(n_answerable):
        rows.append(
            {
                "id": f"a{i}",
                "image": f"imga{i}.png",
                "question": f"What colour is object {i}?",
                "answerable": True,
                "valid_answers": [f"colour{i}"],
                "options": [f"colour{i}", f"guess{i}", f"rand{i}"],
                "hint": "it is unclear",
                "answer_type": "other",
            }
        )
    for i in range(n_unanswerable):
        rows.append(
            {
                "id": f"u{i}",
                "image": f"imgu{i}.png",
                "question": f"What is behind the mask {i}?",
                "answerable": False,
                "valid_answers": [],
                "options": [f"thing{i}", f"guess{i}", f"rand{i}"],
                "hint": "the image lacks important concepts",
                "answer_type": "other",
            }
        )
    path = Path(root) / "items.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path
