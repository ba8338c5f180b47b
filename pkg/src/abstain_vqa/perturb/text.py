"""Question-side perturbations: anchor-noun replacement and semantic negation,
both gated by a language-model perplexity filter.

The filter keeps a rewritten question Q' only when its total negative
log-likelihood rises by at most ``epsilon`` over the original:
``LM(Q') - LM(Q) <= epsilon`` with ``LM(Q) = -sum_i log p(w_i | w_<i)``.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..backends import (
    BackendError,
    DependencyParser,
    LmScorer,
    PosTagger,
    BaselineAnswerer,
)
from ..data import PerturbationKind, PerturbationRecord, VqaInstance, normalize_answer
from ..lexical import (
    expand_contractions,
    is_past_form,
    lemmatize_verb,
    normalize_plural_tense,
    token_spans,
)
from .base import PerturbOutcome, PerturbSkip, Skip

logger = logging.getLogger(__name__)

__all__ = [
    "EmbeddingTable",
    "ReplacementCandidate",
    "NegationResult",
    "TextPerturbConfig",
    "TextBackends",
    "detect_nouns",
    "select_anchor",
    "nearest_neighbors",
    "dedup_lexical",
    "generate_replacements",
    "filter_by_perplexity",
    "negate_question",
    "perturb_text",
]

DEFAULT_EPSILON = 0.4
DEFAULT_NEIGHBORS = 5

_QUESTION_WORDS = {"what", "who", "whom", "whose", "which", "where", "when", "why", "how"}
_NEGATION_KEYWORDS = ("not", "hardly", "never")


class EmbeddingTable:
    """Token -> dense vector table with an explicit miss on unknown tokens."""

    def __init__(self, vectors: dict[str, "np.ndarray | list[float]"]):
        if not vectors:
            raise ValueError("embedding table must be non-empty")
        self.vectors = {tok: np.asarray(v, dtype=np.float64) for tok, v in vectors.items()}
        dims = {v.shape for v in self.vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
        (self.dim,) = dims.pop()
        self.vocabulary = sorted(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def lookup(self, token: str) -> np.ndarray | None:
        """Vector for ``token``, or None -- never a fabricated zero vector."""
        return self.vectors.get(token)

    @classmethod
    def from_text_file(cls, path: str | Path) -> "EmbeddingTable":
        """Parse the plain-text distribution format: ``token v1 ... vd`` rows."""
        vectors: dict[str, list[float]] = {}
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                vectors[parts[0]] = [float(x) for x in parts[1:]]
        return cls(vectors)


@dataclass
class ReplacementCandidate:
    """One anchor -> replacement rewrite awaiting the perplexity filter."""

    anchor: str
    replacement: str
    candidate_question: str
    lm_delta: float | None = None


@dataclass
class NegationResult:
    question: str
    rule: str  # "negate-aux" | "do-support" | "remove-negation"


def detect_nouns(question: str, tagger: PosTagger) -> list[tuple[str, int]]:
    """Nouns of the question as (token, token-index), in sentence order."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    return [(t.token, t.index) for t in tagger.tag(question) if t.tag == "NOUN"]


def select_anchor(
    nouns: list[tuple[str, int]],
    exclude: set[str] | None = None,
) -> tuple[str, int]:
    """Pick the anchor noun to rewrite.

    Prefers the last noun that is not a question word and not equal to any
    ground-truth answer (later nouns are typically the queried object).
    Raises :class:`PerturbSkip` when no admissible noun remains.
    """
    if not nouns:
        raise PerturbSkip("no anchor")
    excluded = {normalize_answer(e) for e in (exclude or set())}
    for token, index in reversed(nouns):
        low = token.lower()
        if low in _QUESTION_WORDS:
            continue
        if normalize_answer(token) in excluded:
            continue
        return token, index
    raise PerturbSkip("no anchor")


def nearest_neighbors(anchor: str, table: EmbeddingTable, k: int) -> list[str]:
    """The k vocabulary tokens most cosine-similar to the anchor.

    Excludes the anchor itself; descending similarity, ties broken
    lexicographically.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    anchor_vec = table.lookup(anchor)
    if anchor_vec is None:
        raise PerturbSkip(f"anchor {anchor!r} out of vocabulary")
    if k == 0:
        return []
    anchor_norm = np.linalg.norm(anchor_vec)
    scored = []
    for token in table.vocabulary:
        if token == anchor:
            continue
        vec = table.vectors[token]
        denom = anchor_norm * np.linalg.norm(vec)
        sim = float(anchor_vec @ vec / denom) if denom > 0 else 0.0
        scored.append((-sim, token))
    scored.sort()
    return [token for _, token in scored[:k]]


def dedup_lexical(anchor: str, candidates: list[str]) -> list[str]:
    """Drop candidates that are the anchor under plural/tense normalization,
    plus exact duplicates, keeping first occurrences in order."""
    anchor_stem = normalize_plural_tense(anchor)
    seen: set[str] = set()
    kept = []
    for cand in candidates:
        if normalize_plural_tense(cand) == anchor_stem:
            continue
        if cand in seen:
            continue
        seen.add(cand)
        kept.append(cand)
    return kept


def generate_replacements(
    question: str,
    anchor: str,
    replacements: list[str],
    anchor_pos: int | None = None,
) -> list[ReplacementCandidate]:
    """Rewrite exactly the anchor occurrence with each replacement token.

    ``anchor_pos`` selects the occurrence by token index (required when the
    anchor occurs more than once); sentence-initial capitalization carries
    over to the replacement.
    """
    spans = token_spans(question)
    target = None
    for i, (token, start, end) in enumerate(spans):
        if token.lower() != anchor.lower():
            continue
        if anchor_pos is None or i == anchor_pos:
            target = (token, start, end)
            break
    if target is None:
        raise ValueError(f"anchor {anchor!r} not found in question {question!r}")
    token, start, end = target

    out = []
    for repl in replacements:
        text = repl
        if start == 0 and token[:1].isupper():
            text = text[:1].upper() + text[1:]
        out.append(
            ReplacementCandidate(
                anchor=anchor,
                replacement=repl,
                candidate_question=question[:start] + text + question[end:],
            )
        )
    return out


def filter_by_perplexity(
    original: str,
    candidates: list[ReplacementCandidate],
    scorer: LmScorer,
    epsilon: float = DEFAULT_EPSILON,
) -> list[ReplacementCandidate]:
    """Keep exactly the candidates with ``LM(Q') - LM(Q) <= epsilon``.

    ``lm_delta`` is populated on every scorable candidate, kept or not. A
    scorer failure drops the candidate with a logged warning -- never a
    silent keep.
    """
    if not np.isfinite(epsilon):
        raise ValueError("epsilon must be finite")
    try:
        base = scorer.score(original)
    except BackendError as exc:
        raise PerturbSkip(f"scorer failed on original: {exc}") from exc
    kept = []
    for cand in candidates:
        try:
            cand.lm_delta = scorer.score(cand.candidate_question) - base
        except BackendError as exc:
            logger.warning("dropping %r: %s", cand.candidate_question, exc)
            continue
        if cand.lm_delta <= epsilon:
            kept.append(cand)
    return kept


def _splice(text: str, start: int, end: int, replacement: str) -> str:
    return text[:start] + replacement + text[end:]


def negate_question(question: str, parser: DependencyParser) -> NegationResult | None:
    """Semantic negation via ordered heuristics.

    (a) negate the copula/auxiliary (contractions expanded first);
    (b) do-support before a bare main verb;
    (c) if the question already carries a negation keyword, remove it.
    Returns None when no rule applies.
    """
    expanded = expand_contractions(question)
    try:
        parsed = parser.parse(expanded)
    except BackendError as exc:
        logger.warning("negation parser failed on %r: %s", question, exc)
        return None

    spans = token_spans(expanded)
    negations = [
        (tok, idx) for tok, idx in parsed.negations if tok.lower() in _NEGATION_KEYWORDS
    ]

    if negations:
        # rule (c): drop the first negation keyword, tidying the whitespace
        _, idx = negations[0]
        _, start, end = spans[idx]
        before = expanded[:start]
        after = expanded[end:]
        if before.endswith(" "):
            before = before[:-1]
        elif after.startswith(" "):
            after = after[1:]
        return NegationResult(question=before + after, rule="remove-negation")

    if parsed.auxiliaries:
        # rule (a): "is ... holding" -> "is ... not holding"; bare copula gets
        # the negation right after it
        _, aux_idx = parsed.auxiliaries[0]
        later_verbs = [idx for _, idx in parsed.verbs if idx > aux_idx]
        if later_verbs:
            _, start, _ = spans[later_verbs[0]]
            return NegationResult(_splice(expanded, start, start, "not "), rule="negate-aux")
        _, _, end = spans[aux_idx]
        return NegationResult(_splice(expanded, end, end, " not"), rule="negate-aux")

    if parsed.verbs:
        # rule (b): do-support with the verb reduced to its base form
        verb, idx = parsed.verbs[0]
        _, start, end = spans[idx]
        lemma = lemmatize_verb(verb)
        if is_past_form(verb):
            support = "did not"
        elif verb.lower() != lemma:
            support = "does not"
        else:
            support = "do not"
        return NegationResult(
            _splice(expanded, start, end, f"{support} {lemma}"), rule="do-support"
        )

    return None


@dataclass
class TextPerturbConfig:
    epsilon: float = DEFAULT_EPSILON
    k_neighbors: int = DEFAULT_NEIGHBORS
    negate: bool = True


@dataclass
class TextBackends:
    tagger: PosTagger
    parser: DependencyParser
    scorer: LmScorer
    embeddings: EmbeddingTable
    baseline: BaselineAnswerer | None = None


def perturb_text(
    instance: VqaInstance,
    config: TextPerturbConfig,
    backends: TextBackends,
) -> PerturbOutcome:
    """Run word replacement and semantic negation over one instance.

    Emits one record per surviving replacement candidate and at most one
    negation record, each perplexity-filtered; sub-operation failures land in
    the skip report instead of aborting the instance.
    """
    outcome = PerturbOutcome()

    def baseline_for(perturbed_question: str) -> str | None:
        if backends.baseline is None:
            return None
        return backends.baseline.answer(instance.image_ref, perturbed_question)

    try:
        nouns = detect_nouns(instance.question, backends.tagger)
    except BackendError as exc:
        raise BackendError(f"instance {instance.id}: {exc}") from exc
    try:
        anchor, anchor_pos = select_anchor(nouns, exclude=set(instance.answers))
        neighbors = nearest_neighbors(anchor, backends.embeddings, config.k_neighbors)
        neighbors = dedup_lexical(anchor, neighbors)
        candidates = generate_replacements(
            instance.question, anchor, neighbors, anchor_pos=anchor_pos
        )
        ranks = {cand.replacement: i for i, cand in enumerate(candidates)}
        survivors = filter_by_perplexity(
            instance.question, candidates, backends.scorer, config.epsilon
        )
        for cand in survivors:
            outcome.records.append(
                PerturbationRecord(
                    source_id=instance.id,
                    kind=PerturbationKind.WORD_REPLACE,
                    perturbed_question=cand.candidate_question,
                    params={
                        "anchor": anchor,
                        "anchor_pos": anchor_pos,
                        "replacement": cand.replacement,
                        "candidate_rank": ranks[cand.replacement],
                        "epsilon": config.epsilon,
                        "k": config.k_neighbors,
                        "lm_delta": cand.lm_delta,
                    },
                    baseline_answer=baseline_for(cand.candidate_question),
                )
            )
    except PerturbSkip as skip:
        outcome.skips.append(Skip(instance.id, "word-replace", skip.reason))

    if config.negate:
        negated = negate_question(instance.question, backends.parser)
        if negated is None:
            outcome.skips.append(Skip(instance.id, "negation", "no negation rule applies"))
        else:
            probe = ReplacementCandidate(
                anchor="", replacement="", candidate_question=negated.question
            )
            try:
                filtered = filter_by_perplexity(
                    instance.question, [probe], backends.scorer, config.epsilon
                )
            except PerturbSkip as skip:
                outcome.skips.append(Skip(instance.id, "negation", skip.reason))
            else:
                if filtered:
                    outcome.records.append(
                        PerturbationRecord(
                            source_id=instance.id,
                            kind=PerturbationKind.NEGATION,
                            perturbed_question=negated.question,
                            params={
                                "rule": negated.rule,
                                "epsilon": config.epsilon,
                                "lm_delta": filtered[0].lm_delta,
                            },
                            baseline_answer=baseline_for(negated.question),
                        )
                    )
                else:
                    outcome.skips.append(
                        Skip(
                            instance.id,
                            "negation",
                            "rewrite rejected by perplexity filter",
                        )
                    )

    return outcome
