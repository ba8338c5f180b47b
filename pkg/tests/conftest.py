"""Shared fixtures: a small corpus, fixture backends, and fixture images."""

import numpy as np
import pytest

from abstain_vqa.backends import (
    FixtureDetector,
    LookupBaseline,
    LookupLmScorer,
    RuleDependencyParser,
    RuleTableTagger,
)
from abstain_vqa.data import AnswerType, VqaInstance
from abstain_vqa.perturb.image import save_png
from abstain_vqa.perturb.text import EmbeddingTable


@pytest.fixture
def tagger():
    return RuleTableTagger()


@pytest.fixture
def parser():
    return RuleDependencyParser()


@pytest.fixture
def corpus():
    return [
        VqaInstance(
            id="q1",
            image_ref="img1.png",
            question="What is under the bridge?",
            answers=["boat"],
            question_type="what is",
            answer_type=AnswerType.OTHER,
        ),
        VqaInstance(
            id="q2",
            image_ref="img2.png",
            question="What color is the bridge?",
            answers=["red"],
            question_type="what color",
            answer_type=AnswerType.OTHER,
        ),
        VqaInstance(
            id="q3",
            image_ref="img3.png",
            question="What is the cat on?",
            answers=["sink"],
            question_type="what is",
            answer_type=AnswerType.OTHER,
        ),
        VqaInstance(
            id="q4",
            image_ref="img4.png",
            question="Is the man running?",
            answers=["yes"],
            question_type="is the",
            answer_type=AnswerType.YES_NO,
        ),
        VqaInstance(
            id="q5",
            image_ref="img5.png",
            question="How many dogs are there?",
            answers=["2"],
            question_type="how many",
            answer_type=AnswerType.NUMBER,
        ),
    ]


@pytest.fixture
def embedding_table():
    # bridge's closest neighbor is tunnel; river drifts further away
    return EmbeddingTable(
        {
            "bridge": [1.0, 0.0, 0.1],
            "tunnel": [0.95, 0.05, 0.1],
            "river": [0.6, 0.7, 0.0],
            "cat": [0.0, 1.0, 0.0],
            "dog": [0.05, 0.98, 0.0],
            "dogs": [0.06, 0.97, 0.0],
            "sink": [0.0, 0.1, 1.0],
        }
    )


@pytest.fixture
def lm_scorer():
    # hand-picked NLLs: "tunnel" passes the 0.4 gate, "river" fails it
    return LookupLmScorer(
        {
            "What is under the bridge?": 10.0,
            "What is under the tunnel?": 10.3,
            "What is under the river?": 10.9,
            "What is not under the bridge?": 10.2,
        },
        default=10.35,
    )


@pytest.fixture
def baseline():
    return LookupBaseline({}, default="water")


@pytest.fixture
def detector():
    return FixtureDetector(
        {
            "img3.png": [
                ["cat", [2, 2, 4, 4], 0.9],
                ["sink", [10, 8, 5, 4], 0.8],
                ["floor", [0, 12, 16, 4], 0.7],
            ],
            "cand1.png": [["cat", [0, 0, 3, 3], 0.9], ["mirror", [4, 4, 3, 3], 0.8]],
            "cand2.png": [["towel", [1, 1, 2, 2], 0.9], ["mirror", [5, 5, 3, 3], 0.8]],
        }
    )


@pytest.fixture
def checker_image():
    """Deterministic 16x16 RGB test pattern."""
    rng = np.random.default_rng(7)
    return rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)


@pytest.fixture
def image_file(tmp_path, checker_image):
    path = tmp_path / "img3.png"
    save_png(checker_image, path)
    return path
