"""Image replacement scoring, masking, and copy-move contracts."""

import numpy as np
import pytest

from abstain_vqa.data import PerturbationKind, VqaInstance
from abstain_vqa.perturb.base import PerturbSkip
from abstain_vqa.perturb.image import (
    BBox,
    ConceptSet,
    DetectedObject,
    ImageBackends,
    ImageEmbedding,
    ImagePerturbConfig,
    ObjectDetection,
    UndefinedScoreError,
    copy_move_object,
    extract_concepts,
    load_image,
    mask_object,
    overlap_score,
    perturb_image,
    rank_candidates,
    relevant_objects,
    save_png,
    select_replacement,
)


def oracle_overlap(anchor_objs, cand_objs, concepts, alpha):
    """Brute-force counting oracle for the overlap score."""
    shared_objects = sum(1 for label in cand_objs if label in anchor_objs)
    shared_concepts = sum(1 for label in cand_objs if label in concepts)
    return alpha * shared_objects / len(cand_objs) + shared_concepts / len(cand_objs)


class TestRankCandidates:
    def test_duplicate_of_anchor_first(self):
        anchor = ImageEmbedding("a", [1.0, 0.0])
        pool = [ImageEmbedding("dup", [2.0, 0.0]), ImageEmbedding("ortho", [0.0, 1.0])]
        assert rank_candidates(anchor, pool, 2) == ["dup", "ortho"]

    def test_orthogonal_after_positive(self):
        anchor = ImageEmbedding("a", [1.0, 0.0])
        pool = [ImageEmbedding("o", [0.0, 1.0]), ImageEmbedding("p", [1.0, 1.0])]
        assert rank_candidates(anchor, pool, 2) == ["p", "o"]

    def test_default_n_is_50(self):
        anchor = ImageEmbedding("a", [1.0, 0.0])
        pool = [ImageEmbedding(f"c{i:03d}", [1.0, i * 0.001]) for i in range(80)]
        assert len(rank_candidates(anchor, pool)) == 50

    def test_dimension_mismatch(self):
        anchor = ImageEmbedding("a", [1.0, 0.0])
        with pytest.raises(ValueError, match="dimension"):
            rank_candidates(anchor, [ImageEmbedding("b", [1.0, 0.0, 0.0])], 1)

    def test_tie_by_ref(self):
        anchor = ImageEmbedding("a", [1.0, 0.0])
        pool = [ImageEmbedding("zz", [3.0, 0.0]), ImageEmbedding("aa", [2.0, 0.0])]
        assert rank_candidates(anchor, pool, 2) == ["aa", "zz"]


class TestExtractConcepts:
    def test_cat_sink(self, tagger):
        concepts = extract_concepts("What is the cat on?", ["sink"], tagger)
        assert set(concepts) == {"cat", "sink"}

    def test_empty_answers(self, tagger):
        concepts = extract_concepts("What is the cat on?", [], tagger)
        assert set(concepts) == {"cat"}

    def test_numeric_answer_token(self, tagger):
        concepts = extract_concepts("How many dogs are there?", ["2"], tagger)
        assert "2" in concepts


class TestOverlapScore:
    def test_hand_arithmetic(self):
        score = overlap_score(
            {"cat", "sink"}, {"cat", "mirror"}, ConceptSet(frozenset({"cat"})), alpha=1.0
        )
        assert score.value == pytest.approx(1.0)

    def test_disjoint_zero(self):
        score = overlap_score(
            {"a", "b"}, {"c", "d"}, ConceptSet(frozenset({"e"})), alpha=1.0
        )
        assert score.value == 0.0

    def test_maximum(self):
        cand = {"cat", "dog"}
        score = overlap_score(
            {"cat", "dog", "x"}, cand, ConceptSet(frozenset({"cat", "dog"})), alpha=1.5
        )
        assert score.value == pytest.approx(1.5 + 1.0)

    def test_empty_candidate_undefined(self):
        with pytest.raises(UndefinedScoreError, match="undefined score"):
            overlap_score({"cat"}, set(), ConceptSet(frozenset()), alpha=1.0)

    def test_oracle_equivalence_random(self):
        rng = np.random.default_rng(42)
        labels = [f"obj{i}" for i in range(12)]
        for _ in range(200):
            anchor = {labels[i] for i in rng.choice(12, rng.integers(0, 8), replace=False)}
            cand = {labels[i] for i in rng.choice(12, rng.integers(1, 8), replace=False)}
            concepts = ConceptSet(
                frozenset(labels[i] for i in rng.choice(12, rng.integers(0, 6), replace=False))
            )
            alpha = float(rng.uniform(0.1, 3.0))
            got = overlap_score(anchor, cand, concepts, alpha).value
            assert got == pytest.approx(oracle_overlap(anchor, cand, concepts, alpha), abs=1e-12)
            assert 0.0 <= got <= alpha + 1.0

    def test_monotone_in_intersections(self):
        concepts = ConceptSet(frozenset({"a", "b"}))
        low = overlap_score({"x"}, {"a", "z"}, concepts, 1.0).value
        high = overlap_score({"x", "a"}, {"a", "z"}, concepts, 1.0).value
        assert high >= low


class TestSelectReplacement:
    def make_detections(self):
        return {
            "img3.png": ObjectDetection(
                "img3.png",
                [
                    DetectedObject("cat", BBox(2, 2, 4, 4), 0.9),
                    DetectedObject("sink", BBox(10, 8, 5, 4), 0.8),
                ],
            ),
            "cand1.png": ObjectDetection(
                "cand1.png",
                [
                    DetectedObject("cat", BBox(0, 0, 3, 3), 0.9),
                    DetectedObject("mirror", BBox(4, 4, 3, 3), 0.8),
                ],
            ),
            "cand2.png": ObjectDetection(
                "cand2.png",
                [
                    DetectedObject("towel", BBox(1, 1, 2, 2), 0.9),
                    DetectedObject("mirror", BBox(5, 5, 3, 3), 0.8),
                ],
            ),
        }

    def make_anchor(self):
        return VqaInstance(
            id="q3",
            image_ref="img3.png",
            question="What is the cat on?",
            answers=["sink"],
        )

    def test_argmin(self, tagger):
        concepts = extract_concepts("What is the cat on?", ["sink"], tagger)
        ref, rank, score = select_replacement(
            self.make_anchor(), ["cand1.png", "cand2.png"], self.make_detections(), concepts
        )
        # cand1 scores 0.5 + 0.5 = 1.0; cand2 scores 0.0
        assert ref == "cand2.png"
        assert rank == 1
        assert score == 0.0

    def test_tie_goes_to_higher_rank(self, tagger):
        detections = self.make_detections()
        detections["cand2.png"] = detections["cand1.png"]
        concepts = extract_concepts("What is the cat on?", ["sink"], tagger)
        ref, rank, _ = select_replacement(
            self.make_anchor(), ["cand1.png", "cand2.png"], detections, concepts
        )
        assert (ref, rank) == ("cand1.png", 0)

    def test_queried_concept_absent_from_chosen(self, tagger):
        concepts = extract_concepts("What is the cat on?", ["sink"], tagger)
        detections = self.make_detections()
        ref, _, _ = select_replacement(
            self.make_anchor(), ["cand1.png", "cand2.png"], detections, concepts
        )
        chosen_classes = {o.class_label for o in detections[ref].objects}
        assert "cat" not in chosen_classes and "sink" not in chosen_classes

    def test_all_undefined(self, tagger):
        detections = self.make_detections()
        detections["cand1.png"] = ObjectDetection("cand1.png", [])
        concepts = extract_concepts("What is the cat on?", ["sink"], tagger)
        with pytest.raises(PerturbSkip):
            select_replacement(self.make_anchor(), ["cand1.png"], detections, concepts)


class TestRelevantObjects:
    def test_match(self):
        det = ObjectDetection(
            "i",
            [
                DetectedObject("cat", BBox(0, 0, 2, 2), 0.9),
                DetectedObject("floor", BBox(0, 2, 2, 2), 0.9),
            ],
        )
        assert relevant_objects(det, ConceptSet(frozenset({"cat"}))) == [BBox(0, 0, 2, 2)]

    def test_no_match(self):
        det = ObjectDetection("i", [DetectedObject("floor", BBox(0, 0, 2, 2), 0.9)])
        assert relevant_objects(det, ConceptSet(frozenset({"cat"}))) == []

    def test_plural_normalization(self):
        det = ObjectDetection("i", [DetectedObject("dogs", BBox(0, 0, 2, 2), 0.9)])
        assert relevant_objects(det, ConceptSet(frozenset({"dog"}))) == [BBox(0, 0, 2, 2)]


class TestMask:
    def test_full_image(self, checker_image):
        h, w = checker_image.shape[:2]
        masked = mask_object(checker_image, BBox(0, 0, w, h))
        assert not masked.any()

    def test_single_pixel(self, checker_image):
        masked = mask_object(checker_image, BBox(3, 5, 1, 1))
        assert not masked[5, 3].any()
        diff = masked != checker_image
        assert diff.any(axis=2).sum() <= 1

    def test_idempotent(self, checker_image):
        bbox = BBox(2, 2, 5, 6)
        once = mask_object(checker_image, bbox)
        twice = mask_object(once, bbox)
        assert np.array_equal(once, twice)

    def test_locality(self, checker_image):
        bbox = BBox(4, 4, 6, 5)
        masked = mask_object(checker_image, bbox)
        assert not masked[4:9, 4:10].any()
        outside = np.ones_like(checker_image, dtype=bool)
        outside[4:9, 4:10] = False
        assert np.array_equal(masked[outside], checker_image[outside])

    def test_out_of_bounds(self, checker_image):
        with pytest.raises(ValueError, match="out of bounds"):
            mask_object(checker_image, BBox(10, 10, 10, 10))

    def test_png_round_trip_bit_exact(self, checker_image, tmp_path):
        bbox = BBox(1, 2, 4, 3)
        masked = mask_object(checker_image, bbox)
        path = tmp_path / "masked.png"
        save_png(masked, path)
        assert np.array_equal(load_image(path), masked)


class TestCopyMove:
    def test_deterministic(self, checker_image):
        bbox = BBox(2, 2, 4, 4)
        a_img, a_src = copy_move_object(checker_image, bbox, [bbox], seed=11)
        b_img, b_src = copy_move_object(checker_image, bbox, [bbox], seed=11)
        assert np.array_equal(a_img, b_img)
        assert a_src == b_src

    def test_patch_fills_target_dims(self, checker_image):
        bbox = BBox(2, 2, 4, 4)
        out, _ = copy_move_object(checker_image, bbox, [bbox], seed=3)
        assert out.shape == checker_image.shape

    def test_outside_target_unchanged(self, checker_image):
        bbox = BBox(5, 6, 4, 3)
        out, _ = copy_move_object(checker_image, bbox, [bbox], seed=5)
        outside = np.ones(checker_image.shape[:2], dtype=bool)
        outside[6:9, 5:9] = False
        assert np.array_equal(out[outside], checker_image[outside])

    def test_source_disjoint_from_relevant(self, checker_image):
        relevant = [BBox(2, 2, 4, 4), BBox(9, 9, 4, 4)]
        for seed in range(50):
            _, src = copy_move_object(checker_image, relevant[0], relevant, seed=seed)
            assert not any(src.intersects(box) for box in relevant)

    def test_source_membership_in_admissible_set(self, checker_image):
        """Chosen source must be one of the exhaustively enumerated windows."""
        relevant = [BBox(2, 2, 4, 4)]
        _, src = copy_move_object(
            checker_image, relevant[0], relevant, seed=7, scale_range=(1.0, 1.0)
        )
        h, w = checker_image.shape[:2]
        admissible = {
            (x, y)
            for x in range(w - src.w + 1)
            for y in range(h - src.h + 1)
            if not any(BBox(x, y, src.w, src.h).intersects(b) for b in relevant)
        }
        assert (src.x, src.y) in admissible

    def test_no_admissible_source_skips(self):
        tiny = np.zeros((4, 4, 3), dtype=np.uint8)
        full = BBox(0, 0, 4, 4)
        with pytest.raises(PerturbSkip, match="no admissible"):
            copy_move_object(tiny, full, [full], seed=1)

    def test_png_round_trip_bit_exact(self, checker_image, tmp_path):
        bbox = BBox(2, 2, 4, 4)
        out, _ = copy_move_object(checker_image, bbox, [bbox], seed=9)
        path = tmp_path / "moved.png"
        save_png(out, path)
        assert np.array_equal(load_image(path), out)


class TestPerturbImage:
    def make_setup(self, tmp_path, corpus, tagger, detector, checker_image):
        save_png(checker_image, tmp_path / "img3.png")
        from abstain_vqa.backends import LookupEmbedder

        embedder = LookupEmbedder(
            {
                "img3.png": [1.0, 0.0],
                "img1.png": [0.9, 0.1],
                "cand1.png": [0.95, 0.05],
                "cand2.png": [0.9, 0.2],
            }
        )
        config = ImagePerturbConfig(
            seed=4,
            output_dir=tmp_path / "out",
            image_root=tmp_path,
        )
        backends = ImageBackends(
            embedder=embedder,
            detector=detector,
            tagger=tagger,
            pool_refs=["cand1.png", "cand2.png"],
        )
        return config, backends

    def test_records_emitted(self, tmp_path, corpus, tagger, detector, checker_image):
        config, backends = self.make_setup(tmp_path, corpus, tagger, detector, checker_image)
        outcome = perturb_image(corpus[2], config, backends)
        kinds = [r.kind for r in outcome.records]
        assert PerturbationKind.IMAGE_REPLACE in kinds
        assert PerturbationKind.OBJECT_MASK in kinds
        assert PerturbationKind.COPY_MOVE in kinds

    def test_mask_covers_concept_object(self, tmp_path, corpus, tagger, detector, checker_image):
        config, backends = self.make_setup(tmp_path, corpus, tagger, detector, checker_image)
        outcome = perturb_image(corpus[2], config, backends)
        mask_records = [r for r in outcome.records if r.kind is PerturbationKind.OBJECT_MASK]
        assert mask_records[0].params["bbox"] == (2, 2, 4, 4)  # the cat bbox

    def test_cap_limits_records(self, tmp_path, corpus, tagger, detector, checker_image):
        config, backends = self.make_setup(tmp_path, corpus, tagger, detector, checker_image)
        config.per_object_cap = 1
        outcome = perturb_image(corpus[2], config, backends)
        per_kind = {}
        for record in outcome.records:
            per_kind[record.kind] = per_kind.get(record.kind, 0) + 1
        assert per_kind.get(PerturbationKind.OBJECT_MASK, 0) <= 1
        assert per_kind.get(PerturbationKind.COPY_MOVE, 0) <= 1

    def test_no_concept_match_skips_object_edits(
        self, tmp_path, corpus, tagger, detector, checker_image
    ):
        config, backends = self.make_setup(tmp_path, corpus, tagger, detector, checker_image)
        inst = VqaInstance(
            id="qq",
            image_ref="img3.png",
            question="What brand is the car?",
            answers=["acme"],
        )
        outcome = perturb_image(inst, config, backends)
        assert not any(
            r.kind in (PerturbationKind.OBJECT_MASK, PerturbationKind.COPY_MOVE)
            for r in outcome.records
        )

    def test_determinism(self, tmp_path, corpus, tagger, detector, checker_image):
        config, backends = self.make_setup(tmp_path, corpus, tagger, detector, checker_image)
        a = perturb_image(corpus[2], config, backends)
        b = perturb_image(corpus[2], config, backends)
        assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]
