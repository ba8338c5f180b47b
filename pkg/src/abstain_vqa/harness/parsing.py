"""Raw model replies -> protocol-conforming verdicts, or out-of-scope.

Parsing rules silently drive the headline numbers, so the refusal lexicon is
an explicit, versioned constant: additions require a changelog entry in this
docstring.

Refusal lexicon changelog:
    v1 -- unanswerable, i cannot answer, i don't know, i do not know, not sure
"""

import re
import string
from dataclasses import dataclass
from enum import Enum

from .prompts import Protocol

__all__ = ["Verdict", "ParsedResponse", "parse_response", "REFUSAL_LEXICON"]

REFUSAL_LEXICON_VERSION = 1
REFUSAL_LEXICON = frozenset(
    {
        "unanswerable",
        "i cannot answer",
        "i don't know",
        "i do not know",
        "not sure",
    }
)


class Verdict(str, Enum):
    ANSWERABLE = "answerable"
    UNANSWERABLE = "unanswerable"
    CHOICE_A = "choice-A"
    CHOICE_B = "choice-B"
    CHOICE_C = "choice-C"
    CHOICE_D = "choice-D"
    FREE_TEXT = "free-text"
    OUT_OF_SCOPE = "out-of-scope"


_CHOICES = {
    "A": Verdict.CHOICE_A,
    "B": Verdict.CHOICE_B,
    "C": Verdict.CHOICE_C,
    "D": Verdict.CHOICE_D,
}
_LETTERS = "ABCD"


@dataclass
class ParsedResponse:
    """The extracted verdict plus the raw reply it came from.

    ``choice_text`` carries the matched option for MC verdicts;
    ``answer_text`` the normalized free text for OE/OEH.
    """

    verdict: Verdict
    raw: str
    choice_text: str | None = None
    answer_text: str | None = None

    def predicted_answerable(self, unanswerable_option: str = "unanswerable") -> bool | None:
        """Binary answerability implied by the verdict; None when out-of-scope."""
        if self.verdict is Verdict.OUT_OF_SCOPE:
            return None
        if self.verdict is Verdict.ANSWERABLE:
            return True
        if self.verdict is Verdict.UNANSWERABLE:
            return False
        if self.verdict is Verdict.FREE_TEXT:
            return True
        return _normalize(self.choice_text or "") != _normalize(unanswerable_option)


def _normalize(text: str) -> str:
    text = text.strip().lower()
    text = text.strip(string.punctuation + string.whitespace)
    return re.sub(r"\s+", " ", text)


def parse_response(
    raw: str,
    protocol: Protocol,
    mc_options: list[str] | None = None,
) -> ParsedResponse:
    """Extract a verdict; everything unextractable parses to out-of-scope.

    BY searches case-insensitively for "unanswerable" before "answerable"
    (substring order matters since one contains the other). MC accepts a
    leading option letter or a unique option-text match. OE/OEH map refusal
    phrases to unanswerable and anything else to free text.
    """
    if protocol is Protocol.MC and mc_options is None:
        raise ValueError("MC parsing requires the option list")
    if not raw.strip():
        return ParsedResponse(verdict=Verdict.OUT_OF_SCOPE, raw=raw)

    if protocol is Protocol.BY:
        low = raw.lower()
        if "unanswerable" in low:
            return ParsedResponse(verdict=Verdict.UNANSWERABLE, raw=raw)
        if "answerable" in low:
            return ParsedResponse(verdict=Verdict.ANSWERABLE, raw=raw)
        return ParsedResponse(verdict=Verdict.OUT_OF_SCOPE, raw=raw)

    if protocol is Protocol.MC:
        match = re.match(r"\s*([ABCDabcd])(?:[.):\s]|$)", raw)
        if match:
            letter = match.group(1).upper()
            index = _LETTERS.index(letter)
            return ParsedResponse(
                verdict=_CHOICES[letter],
                raw=raw,
                choice_text=mc_options[index],
            )
        norm = _normalize(raw)
        hits = [
            i for i, opt in enumerate(mc_options) if _normalize(opt) and _normalize(opt) in norm
        ]
        if len(hits) == 1:
            return ParsedResponse(
                verdict=_CHOICES[_LETTERS[hits[0]]],
                raw=raw,
                choice_text=mc_options[hits[0]],
            )
        return ParsedResponse(verdict=Verdict.OUT_OF_SCOPE, raw=raw)

    # OE / OEH
    norm = _normalize(raw)
    if norm in REFUSAL_LEXICON:
        return ParsedResponse(verdict=Verdict.UNANSWERABLE, raw=raw, answer_text="unanswerable")
    return ParsedResponse(verdict=Verdict.FREE_TEXT, raw=raw, answer_text=norm)
