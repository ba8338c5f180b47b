"""Image-side perturbations: semantically-close image replacement, object
masking, and object copy-move.

Replacement candidates are ranked by cosine similarity of image embeddings;
the final pick minimizes the semantic overlap score

    s_op = alpha * |O_I ∩ O_I'| / |O_I'| + |C_I ∩ O_I'| / |O_I'|

where O_I / O_I' are the object sets of the anchor and candidate images and
C_I the concepts (nouns) mentioned in the question and answer. Low overlap
makes a good replacement: the scene stays coherent while the queried concept
disappears.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..backends import (
    BackendError,
    BaselineAnswerer,
    ImageEmbedder,
    ObjectDetector,
    PosTagger,
)
from ..data import PerturbationKind, PerturbationRecord, VqaInstance
from ..lexical import normalize_plural_tense
from .base import PerturbOutcome, PerturbSkip, Skip, derive_seed

logger = logging.getLogger(__name__)

__all__ = [
    "BBox",
    "DetectedObject",
    "ObjectDetection",
    "ImageEmbedding",
    "ConceptSet",
    "OverlapScore",
    "ImagePerturbConfig",
    "ImageBackends",
    "load_image",
    "save_png",
    "rank_candidates",
    "extract_concepts",
    "overlap_score",
    "select_replacement",
    "relevant_objects",
    "object_class_set",
    "mask_object",
    "copy_move_object",
    "perturb_image",
]

DEFAULT_ALPHA = 1.0
DEFAULT_TOP_N = 50
DEFAULT_DETECTION_THRESHOLD = 0.5


@dataclass(frozen=True)
class BBox:
    """Pixel-space box (x, y, w, h); w and h must be positive."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"bbox must have positive extent, got {self}")

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def intersects(self, other: "BBox") -> bool:
        return (
            self.x < other.right
            and other.x < self.right
            and self.y < other.bottom
            and other.y < self.bottom
        )

    def within(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.right <= width and self.bottom <= height

    def to_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


@dataclass
class DetectedObject:
    class_label: str
    bbox: BBox
    score: float


@dataclass
class ObjectDetection:
    image_ref: str
    objects: list[DetectedObject]


@dataclass
class ImageEmbedding:
    """Unit-normalized feature vector of one image."""

    image_ref: str
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64).ravel()
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ValueError(f"zero embedding for {self.image_ref!r}")
        self.vector = vec / norm


@dataclass(frozen=True)
class ConceptSet:
    """Lowercased, deduplicated nouns from a question and its answers."""

    concepts: frozenset[str]

    def __contains__(self, token: str) -> bool:
        return token in self.concepts

    def __iter__(self):
        return iter(self.concepts)

    def __len__(self) -> int:
        return len(self.concepts)


@dataclass
class OverlapScore:
    value: float
    alpha: float


class UndefinedScoreError(ValueError):
    """Eq-style overlap score is undefined for an object-free candidate image."""


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG/JPEG as an RGB uint8 array."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image: {path}")
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_png(image: np.ndarray, path: str | Path) -> None:
    """Write losslessly so mask/copy-move post-conditions stay bit-exact."""
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(Path(path), format="PNG")


def rank_candidates(
    anchor: ImageEmbedding,
    pool: list[ImageEmbedding],
    n: int = DEFAULT_TOP_N,
) -> list[str]:
    """Top-n pool refs by cosine similarity to the anchor, descending.

    Ties break by image_ref ordering. The anchor itself must not be in the
    pool.
    """
    for emb in pool:
        if emb.vector.shape != anchor.vector.shape:
            raise ValueError(
                f"embedding dimension mismatch: {emb.image_ref} has "
                f"{emb.vector.shape}, anchor has {anchor.vector.shape}"
            )
    scored = sorted(
        ((-float(anchor.vector @ emb.vector), emb.image_ref) for emb in pool),
    )
    return [ref for _, ref in scored[:n]]


def extract_concepts(
    question: str,
    answers: list[str],
    tagger: PosTagger,
) -> ConceptSet:
    """Question nouns plus every answer token, normalized.

    Numeric answers stay as tokens; they simply never match detector classes.
    """
    concepts: set[str] = set()
    if question.strip():
        concepts.update(tok.lower() for tok, _ in _nouns_of(question, tagger))
    for answer in answers:
        concepts.update(tok.lower() for tok in answer.split())
    return ConceptSet(frozenset(concepts))


def _nouns_of(text: str, tagger: PosTagger) -> list[tuple[str, int]]:
    return [(t.token, t.index) for t in tagger.tag(text) if t.tag == "NOUN"]


def overlap_score(
    anchor_objs: set[str],
    cand_objs: set[str],
    concepts: ConceptSet,
    alpha: float = DEFAULT_ALPHA,
) -> OverlapScore:
    """Semantic overlap between the anchor instance and a candidate image."""
    if not cand_objs:
        raise UndefinedScoreError("undefined score: candidate image has no objects")
    denom = len(cand_objs)
    value = (
        alpha * len(anchor_objs & cand_objs) / denom
        + len(set(concepts.concepts) & cand_objs) / denom
    )
    return OverlapScore(value=value, alpha=alpha)


def object_class_set(detection: ObjectDetection, threshold: float) -> set[str]:
    """Classes detected with confidence at or above the operating threshold."""
    return {obj.class_label.lower() for obj in detection.objects if obj.score >= threshold}


def select_replacement(
    anchor: VqaInstance,
    candidates: list[str],
    detections: dict[str, ObjectDetection],
    concepts: ConceptSet,
    alpha: float = DEFAULT_ALPHA,
    detection_threshold: float = DEFAULT_DETECTION_THRESHOLD,
) -> tuple[str, int, float]:
    """The candidate with minimum overlap score.

    Returns (image_ref, cosine rank, score); ties go to the higher cosine
    rank (earlier in ``candidates``). Object-free candidates are excluded
    rather than scored zero: a mismatch that obvious is a shortcut artifact.
    """
    anchor_det = detections.get(anchor.image_ref)
    if anchor_det is None:
        raise PerturbSkip(f"no detections for anchor image {anchor.image_ref!r}")
    anchor_objs = object_class_set(anchor_det, detection_threshold)

    best: tuple[float, int, str] | None = None
    for rank, ref in enumerate(candidates):
        det = detections.get(ref)
        if det is None:
            continue
        cand_objs = object_class_set(det, detection_threshold)
        if not cand_objs:
            continue
        score = overlap_score(anchor_objs, cand_objs, concepts, alpha).value
        if best is None or (score, rank) < (best[0], best[1]):
            best = (score, rank, ref)
    if best is None:
        raise PerturbSkip("no candidate image with a defined overlap score")
    return best[2], best[1], best[0]


def relevant_objects(detection: ObjectDetection, concepts: ConceptSet) -> list[BBox]:
    """Boxes whose class matches a concept under plural/singular normalization."""
    stems = {normalize_plural_tense(c) for c in concepts}
    return [
        obj.bbox
        for obj in detection.objects
        if normalize_plural_tense(obj.class_label) in stems
    ]


def mask_object(image: np.ndarray, bbox: BBox) -> np.ndarray:
    """Zero every pixel inside the box, leave everything outside untouched."""
    height, width = image.shape[:2]
    if not bbox.within(width, height):
        raise ValueError(f"bbox {bbox} out of bounds for {width}x{height} image")
    out = image.copy()
    out[bbox.y : bbox.bottom, bbox.x : bbox.right] = 0
    return out


def _admissible_positions(
    width: int, height: int, sw: int, sh: int, avoid: list[BBox]
) -> np.ndarray:
    """Boolean (y, x) grid of window origins whose window misses every box."""
    xs = width - sw + 1
    ys = height - sh + 1
    if xs <= 0 or ys <= 0:
        return np.zeros((0, 0), dtype=bool)
    ok = np.ones((ys, xs), dtype=bool)
    for box in avoid:
        x0 = max(0, box.x - sw + 1)
        x1 = min(xs, box.right)
        y0 = max(0, box.y - sh + 1)
        y1 = min(ys, box.bottom)
        if x0 < x1 and y0 < y1:
            ok[y0:y1, x0:x1] = False
    return ok


def copy_move_object(
    image: np.ndarray,
    target_bbox: BBox,
    avoid: list[BBox],
    seed: int,
    scale_range: tuple[float, float] = (0.75, 1.25),
) -> tuple[np.ndarray, BBox]:
    """Refill the target box with a patch copied from elsewhere in the image.

    The source window is drawn uniformly at random (seeded) among all integer
    positions whose window is disjoint from every box in ``avoid``; its patch
    is rescaled (bilinear) to the target dimensions. Pixels outside the
    target box are untouched.
    """
    height, width = image.shape[:2]
    if not target_bbox.within(width, height):
        raise ValueError(f"target bbox {target_bbox} out of bounds")

    rng = np.random.default_rng(seed)
    scale = float(rng.uniform(*scale_range))
    for sw, sh in _source_dims(target_bbox, width, height, scale):
        ok = _admissible_positions(width, height, sw, sh, avoid)
        if ok.any():
            flat = np.flatnonzero(ok)
            pick = int(flat[rng.integers(len(flat))])
            ys, xs = divmod(pick, ok.shape[1])
            source = BBox(int(xs), int(ys), sw, sh)
            break
    else:
        raise PerturbSkip("no admissible copy-move source region")

    patch = image[source.y : source.bottom, source.x : source.right]
    if (source.w, source.h) != (target_bbox.w, target_bbox.h):
        resized = Image.fromarray(patch).resize(
            (target_bbox.w, target_bbox.h), Image.BILINEAR
        )
        patch = np.asarray(resized, dtype=image.dtype)
    out = image.copy()
    out[target_bbox.y : target_bbox.bottom, target_bbox.x : target_bbox.right] = patch
    return out, source


def _source_dims(
    target: BBox, width: int, height: int, scale: float
) -> list[tuple[int, int]]:
    """Scaled source dimensions, with the unscaled target as fallback."""
    sw = max(1, min(width, round(target.w * scale)))
    sh = max(1, min(height, round(target.h * scale)))
    dims = [(sw, sh)]
    if (sw, sh) != (target.w, target.h):
        dims.append((target.w, target.h))
    return dims


@dataclass
class ImagePerturbConfig:
    alpha: float = DEFAULT_ALPHA
    top_n: int = DEFAULT_TOP_N
    detection_threshold: float = DEFAULT_DETECTION_THRESHOLD
    per_object_cap: int = 1
    seed: int = 0
    scale_range: tuple[float, float] = (0.75, 1.25)
    output_dir: str | Path = "perturbed_images"
    image_root: str | Path | None = None  # base dir for relative image refs
    record_ref_base: str | Path | None = None  # record refs relative to this dir

    def resolve(self, image_ref: str) -> Path:
        path = Path(image_ref)
        if self.image_root is not None and not path.is_absolute():
            return Path(self.image_root) / path
        return path

    def record_ref(self, path: Path) -> str:
        if self.record_ref_base is not None:
            return str(path.relative_to(self.record_ref_base))
        return str(path)


@dataclass
class ImageBackends:
    embedder: ImageEmbedder
    detector: ObjectDetector
    tagger: PosTagger
    pool_refs: list[str] = field(default_factory=list)
    baseline: BaselineAnswerer | None = None


def perturb_image(
    instance: VqaInstance,
    config: ImagePerturbConfig,
    backends: ImageBackends,
) -> PerturbOutcome:
    """Run image replacement, object mask and copy-move over one instance."""
    outcome = PerturbOutcome()
    concepts = extract_concepts(instance.question, instance.answers, backends.tagger)

    def baseline_for(image_ref: str) -> str | None:
        if backends.baseline is None:
            return None
        return backends.baseline.answer(image_ref, instance.question)

    # I-1: replace the whole image with a semantically close, concept-free one
    try:
        ref, rank, score = _select_i1(instance, config, backends, concepts)
        outcome.records.append(
            PerturbationRecord(
                source_id=instance.id,
                kind=PerturbationKind.IMAGE_REPLACE,
                perturbed_image_ref=ref,
                params={
                    "alpha": config.alpha,
                    "top_n": config.top_n,
                    "candidate_rank": rank,
                    "overlap_score": score,
                    "detection_threshold": config.detection_threshold,
                },
                baseline_answer=baseline_for(ref),
            )
        )
    except (PerturbSkip, BackendError) as exc:
        reason = exc.reason if isinstance(exc, PerturbSkip) else str(exc)
        outcome.skips.append(Skip(instance.id, "image-replace", reason))

    # I-2 / I-3: object-level edits on the original image
    try:
        detection = backends.detector.detect(instance.image_ref)
    except BackendError as exc:
        outcome.skips.append(Skip(instance.id, "object-detect", str(exc)))
        return outcome

    confident = ObjectDetection(
        image_ref=detection.image_ref,
        objects=[o for o in detection.objects if o.score >= config.detection_threshold],
    )
    relevant = relevant_objects(confident, concepts)
    if not relevant:
        outcome.skips.append(
            Skip(instance.id, "object-edit", "no detected object matches the concepts")
        )
        return outcome

    try:
        image = load_image(config.resolve(instance.image_ref))
    except FileNotFoundError as exc:
        outcome.skips.append(Skip(instance.id, "object-edit", str(exc)))
        return outcome

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for obj_index, bbox in enumerate(relevant[: config.per_object_cap]):
        masked = mask_object(image, bbox)
        mask_path = out_dir / f"{instance.id}_mask_{obj_index}.png"
        save_png(masked, mask_path)
        mask_ref = config.record_ref(mask_path)
        outcome.records.append(
            PerturbationRecord(
                source_id=instance.id,
                kind=PerturbationKind.OBJECT_MASK,
                perturbed_image_ref=mask_ref,
                params={
                    "bbox": bbox.to_tuple(),
                    "detection_threshold": config.detection_threshold,
                },
                baseline_answer=baseline_for(mask_ref),
            )
        )

        seed = derive_seed(config.seed, instance.id, obj_index)
        try:
            moved, source = copy_move_object(
                image, bbox, relevant, seed, config.scale_range
            )
        except PerturbSkip as skip:
            outcome.skips.append(Skip(instance.id, "copy-move", skip.reason))
            continue
        move_path = out_dir / f"{instance.id}_copymove_{obj_index}.png"
        save_png(moved, move_path)
        move_ref = config.record_ref(move_path)
        outcome.records.append(
            PerturbationRecord(
                source_id=instance.id,
                kind=PerturbationKind.COPY_MOVE,
                perturbed_image_ref=move_ref,
                params={
                    "bbox": bbox.to_tuple(),
                    "source_bbox": source.to_tuple(),
                    "seed": seed,
                    "scale_range": list(config.scale_range),
                    "resample": "bilinear",
                    "detection_threshold": config.detection_threshold,
                },
                baseline_answer=baseline_for(move_ref),
            )
        )
    return outcome


def _select_i1(
    instance: VqaInstance,
    config: ImagePerturbConfig,
    backends: ImageBackends,
    concepts: ConceptSet,
) -> tuple[str, int, float]:
    anchor = ImageEmbedding(instance.image_ref, backends.embedder.embed(instance.image_ref))
    pool = [
        ImageEmbedding(ref, backends.embedder.embed(ref))
        for ref in backends.pool_refs
        if ref != instance.image_ref
    ]
    if not pool:
        raise PerturbSkip("empty candidate pool")
    candidates = rank_candidates(anchor, pool, config.top_n)
    detections = {}
    for ref in [instance.image_ref, *candidates]:
        try:
            detections[ref] = backends.detector.detect(ref)
        except BackendError:
            logger.warning("no detections for candidate %r; excluded", ref)
    return select_replacement(
        instance,
        candidates,
        detections,
        concepts,
        config.alpha,
        config.detection_threshold,
    )
