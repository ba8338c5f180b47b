"""Toolkit for synthesizing unanswerable visual-question candidates, labeling
them with a human-consensus workflow, and evaluating model abstention.

Subpackages and modules:

* :mod:`abstain_vqa.data` -- canonical instance/record types, JSONL I/O,
  binary-answer filtering, dataset splitting.
* :mod:`abstain_vqa.perturb` -- the five perturbation operators (word
  replacement, semantic negation, image replacement, object mask, copy-move).
* :mod:`abstain_vqa.annotation` -- labeling tasks, response ingestion,
  majority-vote consensus, and survey analytics.
* :mod:`abstain_vqa.selective` -- selective classifier with abstention and
  threshold calibration.
* :mod:`abstain_vqa.harness` -- prompt protocols, response parsing and
  metrics for probing models.
* :mod:`abstain_vqa.service` / :mod:`abstain_vqa.cli` -- annotation HTTP
  service and command-line entry points.
"""

__version__ = "0.1.0"
