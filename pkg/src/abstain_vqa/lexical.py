"""Small string/morphology helpers shared by the perturbation operators.

Word-level heuristics only; anything smarter belongs in a pluggable
tagger/parser backend.
"""

import re

__all__ = [
    "tokenize",
    "token_spans",
    "expand_contractions",
    "normalize_plural_tense",
    "lemmatize_verb",
    "is_past_form",
]

_TOKEN_RE = re.compile(r"[A-Za-z0-9_']+|[^\w\s]")

# contraction stem -> expansion of the "n't" suffix form
_CONTRACTIONS = {
    "isn't": "is not",
    "aren't": "are not",
    "wasn't": "was not",
    "weren't": "were not",
    "don't": "do not",
    "doesn't": "does not",
    "didn't": "did not",
    "hasn't": "has not",
    "haven't": "have not",
    "hadn't": "had not",
    "can't": "can not",
    "couldn't": "could not",
    "won't": "will not",
    "wouldn't": "would not",
    "shan't": "shall not",
    "shouldn't": "should not",
    "mustn't": "must not",
    "mightn't": "might not",
    "needn't": "need not",
    "ain't": "is not",
}

_IRREGULAR_PAST = {
    "ate": "eat",
    "bought": "buy",
    "broke": "break",
    "brought": "bring",
    "built": "build",
    "came": "come",
    "caught": "catch",
    "chose": "choose",
    "did": "do",
    "drank": "drink",
    "drew": "draw",
    "drove": "drive",
    "fed": "feed",
    "fell": "fall",
    "flew": "fly",
    "found": "find",
    "gave": "give",
    "got": "get",
    "held": "hold",
    "hit": "hit",
    "kept": "keep",
    "knew": "know",
    "left": "leave",
    "lost": "lose",
    "made": "make",
    "met": "meet",
    "put": "put",
    "ran": "run",
    "rode": "ride",
    "said": "say",
    "sat": "sit",
    "saw": "see",
    "slept": "sleep",
    "sold": "sell",
    "spoke": "speak",
    "stood": "stand",
    "swam": "swim",
    "threw": "throw",
    "took": "take",
    "wore": "wear",
    "went": "go",
    "wrote": "write",
}

_VOWELS = set("aeiou")


def tokenize(text: str) -> list[str]:
    """Split into word tokens and single punctuation marks."""
    return _TOKEN_RE.findall(text)


def token_spans(text: str) -> list[tuple[str, int, int]]:
    """Tokens with their (start, end) character offsets in ``text``."""
    return [(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def _match_case(template: str, replacement: str) -> str:
    if template[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


def expand_contractions(text: str) -> str:
    """Rewrite "n't" contractions to their two-word forms ("isn't" -> "is not")."""

    def sub(match: re.Match) -> str:
        word = match.group(0)
        expansion = _CONTRACTIONS.get(word.lower())
        if expansion is None:
            return word
        return _match_case(word, expansion)

    return re.sub(r"[A-Za-z]+n't\b", sub, text)


def _undouble(stem: str) -> str:
    if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS:
        return stem[:-1]
    return stem


def normalize_plural_tense(word: str) -> str:
    """Collapse plural and tense inflections to a comparable stem.

    Intentionally coarse: used to decide whether two surface forms are "the
    same word" (candidate dedup, detector-class vs. concept matching), not to
    produce dictionary lemmas.
    """
    w = word.lower()
    if w in _IRREGULAR_PAST:
        return _IRREGULAR_PAST[w]
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("es") and len(w) > 4 and w[:-2].endswith(("s", "x", "z", "ch", "sh")):
        return w[:-2]
    if w.endswith("s") and not w.endswith("ss") and len(w) > 3:
        w = w[:-1]
    if w.endswith("ing") and len(w) > 5:
        return _undouble(w[:-3])
    if w.endswith("ed") and len(w) > 4:
        return _undouble(w[:-2])
    return w


def is_past_form(word: str) -> bool:
    w = word.lower()
    return w in _IRREGULAR_PAST or (w.endswith("ed") and len(w) > 3)


def _measure(stem: str) -> int:
    """Porter measure: number of vowel->consonant transitions."""
    shape = []
    for i, ch in enumerate(stem):
        vowel = ch in _VOWELS or (ch == "y" and i > 0 and stem[i - 1] not in _VOWELS)
        shape.append("V" if vowel else "C")
    return sum(1 for a, b in zip(shape, shape[1:]) if a == "V" and b == "C")


def _ends_cvc(stem: str) -> bool:
    if len(stem) < 3:
        return False
    c2, v, c1 = stem[-3], stem[-2], stem[-1]
    return c2 not in _VOWELS and v in _VOWELS and c1 not in _VOWELS and c1 not in "wxy"


def lemmatize_verb(word: str) -> str:
    """Base form of a verb for do-support ("threw" -> "throw", "goes" -> "go")."""
    w = word.lower()
    if w in _IRREGULAR_PAST:
        return _IRREGULAR_PAST[w]
    if w.endswith("ied") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("ed") and len(w) > 3:
        stem = _undouble(w[:-2])
        # "liked" -> "lik" -> "like"; undoubled stems ("stopped" -> "stop") keep as-is
        if stem == w[:-2] and _measure(stem) == 1 and _ends_cvc(stem):
            return stem + "e"
        return stem
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("es") and len(w) > 3 and w[:-2].endswith(("s", "x", "z", "ch", "sh", "o")):
        return w[:-2]
    if w.endswith("s") and not w.endswith("ss") and len(w) > 2:
        return w[:-1]
    return w
