"""Run configuration: one human-readable YAML file, CLI-flag overrides win,
environment variables override backend file locations.

Every command echoes its effective configuration, seeds, and input-file
hashes into a run manifest so the run is reproducible from the manifest
alone.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

__all__ = ["RunConfig", "load_config", "write_manifest", "ensure_output_dir"]

ENV_PREFIX = "ABSTAIN_VQA_"


@dataclass
class PathsConfig:
    corpus: str = "corpus.jsonl"
    images: str | None = None
    output: str = "out"


@dataclass
class PerturbSection:
    epsilon: float = 0.4
    k_neighbors: int = 5
    alpha: float = 1.0
    top_n: int = 50
    detection_threshold: float = 0.5
    per_object_cap: int = 1
    seed: int = 0
    negate: bool = True
    scale_range: tuple[float, float] = (0.75, 1.25)


@dataclass
class BackendsSection:
    """File-backed fixture backends; point these at real services by swapping
    the loader in :mod:`abstain_vqa.cli`."""

    embeddings_file: str | None = None
    lm_scores_file: str | None = None
    lm_default_score: float | None = None
    image_embeddings_file: str | None = None
    detections_file: str | None = None
    baseline_answers_file: str | None = None
    baseline_default: str = "unknown"


@dataclass
class ShotsSection:
    n_answerable: int = 0
    n_unanswerable: int = 0
    seed: int = 0
    pool_file: str | None = None


@dataclass
class EvalSection:
    protocol: str = "BY"
    model_client: str = "echo"  # echo | constant:<text> | lookup:<json file>
    max_in_flight: int = 4
    retries: int = 2
    seed: int = 0
    shots: ShotsSection = field(default_factory=ShotsSection)


@dataclass
class SelectiveSection:
    variant: str = "CLS"
    theta: float = 0.5
    grid: list[float] = field(default_factory=lambda: [round(0.1 * i, 2) for i in range(1, 10)])
    learning_rate: float = 0.5
    epochs: int = 500
    seed: int = 0


@dataclass
class AnnotateSection:
    exemplars_file: str | None = None
    seed: int = 0
    lease_seconds: int = 600
    annotations_per_task: int = 3


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    perturb: PerturbSection = field(default_factory=PerturbSection)
    backends: BackendsSection = field(default_factory=BackendsSection)
    eval: EvalSection = field(default_factory=EvalSection)
    selective: SelectiveSection = field(default_factory=SelectiveSection)
    annotate: AnnotateSection = field(default_factory=AnnotateSection)

    def to_dict(self) -> dict:
        return asdict(self)


def _merge(base: Any, data: dict) -> None:
    for key, value in data.items():
        if not hasattr(base, key):
            raise ValueError(f"unknown config key: {key}")
        current = getattr(base, key)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict):
                raise ValueError(f"config section {key!r} must be a mapping")
            _merge(current, value)
        elif key == "scale_range" and value is not None:
            setattr(base, key, tuple(value))
        else:
            setattr(base, key, value)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Build the effective configuration: defaults < file < env < overrides."""
    config = RunConfig()
    if path is not None:
        with Path(path).open(encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        _merge(config, data)
    _apply_env(config.backends)
    if overrides:
        _merge(config, overrides)
    return config


def _apply_env(backends: BackendsSection) -> None:
    for field_name in backends.__dataclass_fields__:
        env_key = ENV_PREFIX + field_name.upper()
        if env_key in os.environ:
            setattr(backends, field_name, os.environ[env_key])


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str | Path,
    command: str,
    config: RunConfig,
    inputs: list[str | Path] | None = None,
    extra: dict | None = None,
) -> Path:
    """Echo command, effective config, and input hashes into the run manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config.to_dict(),
        "inputs": {
            str(p): _sha256(Path(p)) for p in (inputs or []) if Path(p).exists()
        },
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def ensure_output_dir(path: str | Path, force: bool = False) -> Path:
    """Create the output dir, refusing to reuse a non-empty one without
    ``force``."""
    path = Path(path)
    if path.exists() and any(path.iterdir()) and not force:
        raise FileExistsError(
            f"output directory {path} is not empty; pass --force to overwrite"
        )
    path.mkdir(parents=True, exist_ok=True)
    return path
