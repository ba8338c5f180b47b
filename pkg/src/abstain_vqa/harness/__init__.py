"""Model-probing harness: prompt protocols, few-shot assembly, response
parsing with out-of-scope accounting, metrics, and the evaluation runner."""

from .prompts import (
    Protocol,
    ShotConfig,
    ExemplarShot,
    build_prompt,
    assemble_few_shot,
)
from .parsing import Verdict, ParsedResponse, parse_response, REFUSAL_LEXICON
from .metrics import MetricReport, acc_binary, acc_open, weighted_f1, normalize_prediction
from .runner import EvalItem, RunResult, run_eval, render_report

__all__ = [
    "Protocol",
    "ShotConfig",
    "ExemplarShot",
    "build_prompt",
    "assemble_few_shot",
    "Verdict",
    "ParsedResponse",
    "parse_response",
    "REFUSAL_LEXICON",
    "MetricReport",
    "acc_binary",
    "acc_open",
    "weighted_f1",
    "normalize_prediction",
    "EvalItem",
    "RunResult",
    "run_eval",
    "render_report",
]
