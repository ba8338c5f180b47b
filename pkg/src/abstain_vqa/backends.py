"""Pluggable backend contracts and the fixture implementations shipped for tests.

Every heavyweight dependency of the pipeline (POS tagging, dependency
parsing, LM scoring, image embedding, object detection, baseline answering,
model querying) sits behind one of these small call/response contracts, so
the full suite runs without any pretrained weights. Production deployments
plug in real backends with the same signatures.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .lexical import tokenize

__all__ = [
    "BackendError",
    "TaggedToken",
    "ParsedQuestion",
    "PosTagger",
    "DependencyParser",
    "LmScorer",
    "ImageEmbedder",
    "ObjectDetector",
    "BaselineAnswerer",
    "ModelClient",
    "FusionBackend",
    "RuleTableTagger",
    "RuleDependencyParser",
    "LookupLmScorer",
    "LookupEmbedder",
    "FixtureDetector",
    "LookupBaseline",
    "ConstantBaseline",
    "StubModelClient",
    "ConstantModelClient",
    "ConcatFusion",
]


class BackendError(RuntimeError):
    """A backend call failed; the message names the backend and the input."""


@dataclass
class TaggedToken:
    token: str
    tag: str
    index: int


@dataclass
class ParsedQuestion:
    """Verb/auxiliary/negation occurrences as (token, token-index) pairs."""

    tokens: list[str]
    verbs: list[tuple[str, int]]
    auxiliaries: list[tuple[str, int]]
    negations: list[tuple[str, int]]


class PosTagger(Protocol):
    def tag(self, text: str) -> list[TaggedToken]: ...


class DependencyParser(Protocol):
    def parse(self, text: str) -> ParsedQuestion: ...


class LmScorer(Protocol):
    """Total negative log-likelihood of a question under a language model.

    Deterministic for fixed text and nonnegative for any tokenizer producing
    at least one token.
    """

    def score(self, question: str) -> float: ...


class ImageEmbedder(Protocol):
    def embed(self, image_ref: str) -> "np.ndarray": ...


class ObjectDetector(Protocol):
    def detect(self, image_ref: str): ...


class BaselineAnswerer(Protocol):
    def answer(self, image_ref: str, question: str) -> str: ...


class ModelClient(Protocol):
    """Single text+image call returning the raw model reply."""

    def complete(self, prompt: str, image_ref: str) -> str: ...


class FusionBackend(Protocol):
    def fuse(self, image_encoding: np.ndarray, text_encoding: np.ndarray) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# Rule-table POS tagger
# ---------------------------------------------------------------------------

_WH = {"what", "who", "whom", "whose", "which", "where", "when", "why", "how"}
_DET = {
    "the", "a", "an", "this", "that", "these", "those", "some", "any", "no",
    "each", "every", "either", "neither", "both", "all", "many", "much",
    "few", "several", "another", "other",
}
_AUX = {
    "is", "are", "was", "were", "am", "be", "been", "being",
    "do", "does", "did", "have", "has", "had",
    "can", "could", "will", "would", "shall", "should", "may", "might", "must",
}
_PRON = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us",
    "them", "his", "hers", "its", "their", "theirs", "my", "your", "our",
    "mine", "yours", "ours", "someone", "anyone", "everyone", "somebody",
    "anybody", "everybody", "there",
}
_ADP = {
    "in", "on", "at", "by", "with", "under", "over", "above", "below",
    "behind", "near", "of", "for", "to", "from", "into", "onto", "off",
    "out", "up", "down", "about", "around", "between", "through", "during",
    "against", "across", "along", "beside", "inside", "outside", "without",
    "within", "upon", "toward", "towards", "next",
}
_CONJ = {"and", "or", "but", "nor", "so", "yet", "if", "because", "while"}
_ADV = {
    "not", "hardly", "never", "very", "too", "also", "just", "here", "now",
    "then", "always", "often", "really", "quite", "still", "already",
    "usually", "currently", "most", "more", "only",
}
_ADJ = {
    "big", "small", "large", "little", "old", "new", "good", "bad", "long",
    "short", "high", "low", "hot", "cold", "young", "tall", "happy", "sad",
    "red", "blue", "green", "yellow", "white", "black", "brown", "orange",
    "purple", "pink", "gray", "grey", "same", "different", "main", "left",
    "right", "front", "back", "top", "bottom", "open", "closed", "empty",
    "full", "wet", "dry", "clean", "dirty",
}
_VERB = {
    "hold", "holds", "held", "throw", "throws", "threw", "thrown", "run",
    "runs", "ran", "eat", "eats", "ate", "eaten", "sit", "sits", "sat",
    "stand", "stands", "stood", "wear", "wears", "wore", "worn", "ride",
    "rides", "rode", "ridden", "fly", "flies", "flew", "flown", "go", "goes",
    "went", "gone", "make", "makes", "made", "take", "takes", "took",
    "taken", "see", "sees", "saw", "seen", "come", "comes", "came", "look",
    "looks", "play", "plays", "walk", "walks", "jump", "jumps", "catch",
    "catches", "caught", "drink", "drinks", "drank", "sleep", "sleeps",
    "slept", "write", "writes", "wrote", "written", "say", "says", "said",
    "put", "puts", "get", "gets", "got", "give", "gives", "gave", "given",
    "find", "finds", "found", "think", "thinks", "thought", "know", "knows",
    "knew", "known", "want", "wants", "like", "likes", "love", "loves",
    "carry", "carries", "carried", "pull", "pulls", "push", "pushes",
    "cut", "cuts", "cook", "cooks", "drive", "drives", "drove", "driven",
    "swim", "swims", "swam", "climb", "climbs", "point", "points", "smile",
    "smiles", "laugh", "laughs", "cry", "cries", "talk", "talks", "speak",
    "speaks", "spoke", "spoken", "watch", "watches", "wash", "washes",
    "clean", "cleans", "feed", "feeds", "fed", "happen", "happens",
    "happened", "hang", "hangs", "hung",
}
# -ing words that are overwhelmingly nouns in visual questions
_ING_NOUNS = {
    "building", "buildings", "painting", "paintings", "ceiling", "ceilings",
    "clothing", "lightning", "morning", "evening", "wedding", "weddings",
    "thing", "things", "something", "anything", "nothing", "everything",
    "ring", "rings", "king", "kings", "string", "strings", "wing", "wings",
    "spring", "springs", "drawing", "drawings", "icing",
}
_NUMERALS = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve",
}


class RuleTableTagger:
    """Lexicon + suffix-rule POS tagger; unknown words default to NOUN.

    A deliberately small stand-in for a real tagger backend: the lexicons
    cover question-domain function words and frequent verbs, which is enough
    for fixtures and lets tests run without model downloads.
    """

    def tag(self, text: str) -> list[TaggedToken]:
        if not text.strip():
            raise BackendError("tagger: empty text")
        tagged = []
        for index, token in enumerate(tokenize(text)):
            tagged.append(TaggedToken(token, self._tag_one(token), index))
        return tagged

    @staticmethod
    def _tag_one(token: str) -> str:
        if not token[0].isalnum() and "'" not in token:
            return "PUNCT"
        low = token.lower()
        if low.isdigit() or low in _NUMERALS:
            return "NUM"
        if low in _WH:
            return "WH"
        if low in _AUX:
            return "AUX"
        if low in _DET:
            return "DET"
        if low in _PRON:
            return "PRON"
        if low in _ADP:
            return "ADP"
        if low in _CONJ:
            return "CONJ"
        if low in _ADV:
            return "ADV"
        if low in _ADJ:
            return "ADJ"
        if low in _VERB:
            return "VERB"
        if low in _ING_NOUNS:
            return "NOUN"
        if low.endswith("ing") and len(low) > 4:
            return "VERB"
        if low.endswith("ed") and len(low) > 4:
            return "VERB"
        return "NOUN"


class RuleDependencyParser:
    """Shallow parse built on the rule tagger: verbs, auxiliaries, negations."""

    def __init__(self, tagger: PosTagger | None = None):
        self._tagger = tagger or RuleTableTagger()

    def parse(self, text: str) -> ParsedQuestion:
        tagged = self._tagger.tag(text)
        neg_words = {"not", "hardly", "never", "n't"}
        return ParsedQuestion(
            tokens=[t.token for t in tagged],
            verbs=[(t.token, t.index) for t in tagged if t.tag == "VERB"],
            auxiliaries=[(t.token, t.index) for t in tagged if t.tag == "AUX"],
            negations=[(t.token, t.index) for t in tagged if t.token.lower() in neg_words],
        )


# ---------------------------------------------------------------------------
# Fixture scorers / embedders / detectors
# ---------------------------------------------------------------------------


class LookupLmScorer:
    """LM scorer backed by a text -> NLL table; unknown text raises or defaults."""

    def __init__(self, scores: dict[str, float], default: float | None = None):
        self.scores = dict(scores)
        self.default = default

    def score(self, question: str) -> float:
        if question in self.scores:
            return self.scores[question]
        if self.default is not None:
            return self.default
        raise BackendError(f"lm-scorer: no score recorded for {question!r}")

    @classmethod
    def from_json(cls, path: str | Path, default: float | None = None) -> "LookupLmScorer":
        with Path(path).open(encoding="utf-8") as fh:
            return cls(json.load(fh), default=default)


class LookupEmbedder:
    """Image embedder backed by a ref -> vector table."""

    def __init__(self, vectors: dict[str, "np.ndarray | list[float]"]):
        self.vectors = {ref: np.asarray(v, dtype=np.float64) for ref, v in vectors.items()}

    def embed(self, image_ref: str) -> np.ndarray:
        if image_ref not in self.vectors:
            raise BackendError(f"embedder: no vector for {image_ref!r}")
        return self.vectors[image_ref]

    @classmethod
    def from_json(cls, path: str | Path) -> "LookupEmbedder":
        with Path(path).open(encoding="utf-8") as fh:
            return cls(json.load(fh))


class FixtureDetector:
    """Object detector backed by a ref -> detections table.

    The table maps image refs to lists of ``[class_label, [x, y, w, h], score]``.
    """

    def __init__(self, detections: dict[str, list]):
        self.detections = detections

    def detect(self, image_ref: str):
        from .perturb.image import BBox, DetectedObject, ObjectDetection

        if image_ref not in self.detections:
            raise BackendError(f"detector: no detections for {image_ref!r}")
        objects = [
            DetectedObject(label, BBox(*map(int, bbox)), float(score))
            for label, bbox, score in self.detections[image_ref]
        ]
        return ObjectDetection(image_ref=image_ref, objects=objects)

    @classmethod
    def from_json(cls, path: str | Path) -> "FixtureDetector":
        with Path(path).open(encoding="utf-8") as fh:
            return cls(json.load(fh))


class LookupBaseline:
    """Baseline answerer keyed by question text (falls back to a constant)."""

    def __init__(self, answers: dict[str, str], default: str = "unknown"):
        self.answers = dict(answers)
        self.default = default

    def answer(self, image_ref: str, question: str) -> str:
        return self.answers.get(question, self.default)


@dataclass
class ConstantBaseline:
    text: str = "unknown"

    def answer(self, image_ref: str, question: str) -> str:
        return self.text


@dataclass
class StubModelClient:
    """Model client delegating to a (prompt, image_ref) -> reply callable."""

    fn: Callable[[str, str], str]
    calls: list[tuple[str, str]] = field(default_factory=list)

    def complete(self, prompt: str, image_ref: str) -> str:
        self.calls.append((prompt, image_ref))
        return self.fn(prompt, image_ref)


@dataclass
class ConstantModelClient:
    text: str = ""

    def complete(self, prompt: str, image_ref: str) -> str:
        return self.text


class ConcatFusion:
    """Reference fusion: concatenate image and text encodings."""

    def fuse(self, image_encoding: np.ndarray, text_encoding: np.ndarray) -> np.ndarray:
        v = np.asarray(image_encoding, dtype=np.float64).ravel()
        l = np.asarray(text_encoding, dtype=np.float64).ravel()
        return np.concatenate([v, l])
