"""The five perturbation operators that turn answerable instances into
unanswerable candidates: word replacement and semantic negation on the
question side; image replacement, object masking and object copy-move on the
image side."""

from .base import PerturbOutcome, PerturbSkip, Skip, derive_seed
from .text import TextPerturbConfig, TextBackends, perturb_text
from .image import ImagePerturbConfig, ImageBackends, perturb_image

__all__ = [
    "PerturbOutcome",
    "PerturbSkip",
    "Skip",
    "derive_seed",
    "TextPerturbConfig",
    "TextBackends",
    "perturb_text",
    "ImagePerturbConfig",
    "ImageBackends",
    "perturb_image",
]
