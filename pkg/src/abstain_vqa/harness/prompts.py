"""The four probe protocols and their prompt templates.

The templates are byte-stable: golden-file tests pin every one of them, so
any edit here must update the goldens deliberately. BY asks for a binary
answerability call, MC offers the three collected answers plus an
"unanswerable" option, OE is the bare question, and OEH appends a hint
naming the suspected reason for unanswerability.
"""

import random
from dataclasses import dataclass, field
from enum import Enum

__all__ = [
    "Protocol",
    "ShotConfig",
    "ExemplarShot",
    "build_prompt",
    "assemble_few_shot",
    "BY_TEMPLATE",
    "MC_TEMPLATE",
    "OE_TEMPLATE",
    "OEH_TEMPLATE",
]


class Protocol(str, Enum):
    BY = "BY"
    MC = "MC"
    OE = "OE"
    OEH = "OEH"


BY_TEMPLATE = (
    "Question: Given the question that {question}, "
    "is the above question answerable or unanswerable based on the image?"
)

MC_TEMPLATE = (
    "{question}\n"
    "\n"
    "Options:\n"
    "A. {a}\n"
    "B. {b}\n"
    "C. {c}\n"
    "D. {d}\n"
    "\n"
    "The answer is: A/B/C/D."
)

OE_TEMPLATE = "{question}"

OEH_TEMPLATE = "{question} If you feel it {reason}, you can simply reply ``unanswerable''."


def build_prompt(
    question: str,
    protocol: Protocol,
    options: list[str] | None = None,
    hint: str | None = None,
) -> str:
    """Instantiate the protocol template.

    ``options`` (exactly four) is required for MC and forbidden elsewhere;
    ``hint`` likewise for OEH.
    """
    if protocol is Protocol.MC:
        if options is None or len(options) != 4:
            raise ValueError("MC requires exactly 4 options")
    elif options is not None:
        raise ValueError(f"{protocol.value} takes no options")
    if protocol is Protocol.OEH:
        if hint is None:
            raise ValueError("OEH requires a hint")
    elif hint is not None:
        raise ValueError(f"{protocol.value} takes no hint")

    if protocol is Protocol.BY:
        return BY_TEMPLATE.format(question=question)
    if protocol is Protocol.MC:
        a, b, c, d = options
        return MC_TEMPLATE.format(question=question, a=a, b=b, c=c, d=d)
    if protocol is Protocol.OE:
        return OE_TEMPLATE.format(question=question)
    return OEH_TEMPLATE.format(question=question, reason=hint)


@dataclass
class ExemplarShot:
    """A fully-worked exemplar: its prompt ingredients plus the gold response."""

    question: str
    answerable: bool
    response: str
    options: list[str] | None = None
    hint: str | None = None

    def render(self, protocol: Protocol) -> str:
        prompt = build_prompt(
            self.question,
            protocol,
            options=self.options if protocol is Protocol.MC else None,
            hint=self.hint if protocol is Protocol.OEH else None,
        )
        return f"{prompt}\n{self.response}"


@dataclass
class ShotConfig:
    """How many answerable/unanswerable exemplars precede the query."""

    n_answerable: int = 0
    n_unanswerable: int = 0
    pool: list[ExemplarShot] = field(default_factory=list)
    seed: int = 0

    @property
    def total(self) -> int:
        return self.n_answerable + self.n_unanswerable


def assemble_few_shot(prompt: str, shots: ShotConfig, protocol: Protocol) -> str:
    """Prepend k worked exemplars matching the configured composition.

    Exemplars are drawn (seeded, without replacement) from the pool's
    answerable/unanswerable sides, then shuffled together; k = 0 returns the
    prompt unchanged.
    """
    if shots.total == 0:
        return prompt
    rng = random.Random(shots.seed)
    answerable = [e for e in shots.pool if e.answerable]
    unanswerable = [e for e in shots.pool if not e.answerable]
    if len(answerable) < shots.n_answerable or len(unanswerable) < shots.n_unanswerable:
        raise ValueError(
            f"exemplar pool exhausted: need {shots.n_answerable} answerable / "
            f"{shots.n_unanswerable} unanswerable, have "
            f"{len(answerable)} / {len(unanswerable)}"
        )
    chosen = rng.sample(answerable, shots.n_answerable) + rng.sample(
        unanswerable, shots.n_unanswerable
    )
    rng.shuffle(chosen)
    blocks = [e.render(protocol) for e in chosen]
    return "\n\n".join(blocks + [prompt])
