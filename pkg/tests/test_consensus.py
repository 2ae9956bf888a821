"""Annotator agreement scores and source-of-truth selection."""

import itertools
import math

import pytest

from helpers import ann, cat, image, video
from egobench.consensus import (
    AnnotatorSet,
    annotator_sets,
    consensus_scores,
    pairwise_agreement,
    select_source_of_truth,
)
from egobench.errors import IntegrityError
from egobench.schema import Dataset


def boxes(annotator_id, rows, image_id=1, start_aid=None, category=1):
    """rows: iterable of (x, y, w, h) tuples, one annotation each."""
    start = start_aid if start_aid is not None else annotator_id * 100
    return tuple(
        ann(start + i, image_id, category, r, annotator_id=annotator_id)
        for i, r in enumerate(rows)
    )


class TestPairwiseAgreement:
    def test_identical_sets_score_one(self):
        a = boxes(1, [(0, 0, 10, 10), (50, 50, 5, 5)])
        b = boxes(2, [(0, 0, 10, 10), (50, 50, 5, 5)])
        assert pairwise_agreement(a, b) == 1.0

    def test_empty_against_empty(self):
        assert pairwise_agreement((), ()) == 1.0

    def test_empty_against_nonempty(self):
        b = boxes(2, [(0, 0, 10, 10)])
        assert pairwise_agreement((), b) == 0.0
        assert pairwise_agreement(b, ()) == 0.0

    def test_half_matched(self):
        # one perfect match, one box with nothing to match
        a = boxes(1, [(0, 0, 10, 10), (100, 100, 10, 10)])
        b = boxes(2, [(0, 0, 10, 10)])
        assert pairwise_agreement(a, b) == 0.5

    def test_partial_overlap_value(self):
        # IoU(a0, b0) = 90/110
        a = boxes(1, [(0, 1, 10, 10)])
        b = boxes(2, [(0, 0, 10, 10)])
        assert pairwise_agreement(a, b) == 90.0 / 110.0

    def test_asymmetry(self):
        a = boxes(1, [(0, 0, 10, 10)])
        b = boxes(2, [(0, 0, 10, 10), (100, 100, 10, 10)])
        assert pairwise_agreement(a, b) == 1.0  # a's single box matched
        assert pairwise_agreement(b, a) == 0.5  # b's extra box unmatched

    def test_category_gate(self):
        a = boxes(1, [(0, 0, 10, 10)], category=1)
        b = boxes(2, [(0, 0, 10, 10)], category=2)
        assert pairwise_agreement(a, b) == 0.0

    def test_zero_iou_pairs_never_match(self):
        a = boxes(1, [(0, 0, 1, 1)])
        b = boxes(2, [(1, 0, 1, 1)])  # touching, IoU 0
        assert pairwise_agreement(a, b) == 0.0

    def test_descending_iou_greedy_consumes_b(self):
        # wide a0 ties b0/b1 at 0.5 and takes b0 (lowest index); a1 only
        # overlaps b0 (IoU 1/3) and finds it consumed.
        a = boxes(1, [(0, 0, 2, 1), (0, 0.5, 1, 1)])
        b = boxes(2, [(0, 0, 1, 1), (1, 0, 1, 1)])
        assert pairwise_agreement(a, b) == (0.5 + 0.0) / 2

    def test_best_pair_wins_regardless_of_listing_order(self):
        # a1 matches b0 perfectly and is processed first despite coming
        # second in the list; a0 then falls back to b1.
        a = boxes(1, [(0, 0, 2, 1), (0, 0, 1, 1)])
        b = boxes(2, [(0, 0, 1, 1), (1, 0, 1, 1)])
        assert pairwise_agreement(a, b) == (0.5 + 1.0) / 2

    def test_mixed_images_rejected(self):
        a = boxes(1, [(0, 0, 10, 10)], image_id=1)
        b = boxes(2, [(0, 0, 10, 10)], image_id=2)
        with pytest.raises(IntegrityError, match="span images"):
            pairwise_agreement(a, b)

    def test_translation_invariance(self):
        a_rows = [(0, 0, 10, 10), (20, 5, 8, 6)]
        b_rows = [(1, 1, 10, 10), (19, 5, 9, 6)]
        base = pairwise_agreement(boxes(1, a_rows), boxes(2, b_rows))
        dx, dy = 13.25, -4.75
        shifted = pairwise_agreement(
            boxes(1, [(x + dx, y + dy, w, h) for x, y, w, h in a_rows]),
            boxes(2, [(x + dx, y + dy, w, h) for x, y, w, h in b_rows]),
        )
        assert shifted == pytest.approx(base, abs=1e-12)


def three_way_set(lists, ids=(1, 2, 3), image_id=1):
    by = {}
    for k, (aid, rows) in enumerate(zip(ids, lists)):
        by[aid] = boxes(aid, rows, image_id=image_id, start_aid=(k + 1) * 100)
    return AnnotatorSet(image_id=image_id, by_annotator=by)


AGREE = [(0, 0, 10, 10)]
FAR = [(200, 200, 10, 10)]


class TestConsensusScores:
    def test_two_agreeing_one_outlier(self):
        aset = three_way_set([AGREE, AGREE, FAR])
        scores = consensus_scores(aset)
        assert scores == {1: 0.5, 2: 0.5, 3: 0.0}

    def test_winner_is_lowest_id_on_tie(self):
        aset = three_way_set([AGREE, AGREE, FAR])
        assert select_source_of_truth(aset) == 1

    def test_full_agreement(self):
        aset = three_way_set([AGREE, AGREE, AGREE])
        assert consensus_scores(aset) == {1: 1.0, 2: 1.0, 3: 1.0}
        assert select_source_of_truth(aset) == 1

    def test_clear_winner(self):
        # annotator 3 agrees with nobody; 2 sits between 1 and 3
        near = [(0, 1, 10, 10)]
        aset = three_way_set([AGREE, near, FAR])
        scores = consensus_scores(aset)
        assert scores[1] == scores[2]  # symmetric pair, same mean
        assert scores[3] == 0.0
        assert select_source_of_truth(aset) == 1

    def test_permutation_equivariance_all_orderings(self):
        lists = [AGREE, [(0, 2, 10, 10)], FAR]
        base = consensus_scores(three_way_set(lists))
        for perm in itertools.permutations(range(3)):
            permuted = three_way_set([lists[perm[k]] for k in range(3)])
            scores = consensus_scores(permuted)
            for k in range(3):
                assert scores[k + 1] == base[perm[k] + 1]

    def test_selection_follows_relabeling(self):
        lists = [FAR, AGREE, AGREE]
        # winner should always be whichever id holds an AGREE list, lowest first
        for perm in itertools.permutations(range(3)):
            aset = three_way_set([lists[perm[k]] for k in range(3)])
            agree_ids = [k + 1 for k in range(3) if lists[perm[k]] == AGREE]
            assert select_source_of_truth(aset) == min(agree_ids)

    def test_too_few_annotators(self):
        aset = AnnotatorSet(image_id=1, by_annotator={1: boxes(1, AGREE)})
        with pytest.raises(IntegrityError, match="need at least 2"):
            consensus_scores(aset)

    def test_mismatched_image_rejected_at_construction(self):
        with pytest.raises(IntegrityError, match="is for image"):
            AnnotatorSet(image_id=1, by_annotator={1: boxes(1, AGREE, image_id=2)})

    def test_empty_annotator_scores_zero_against_rest(self):
        aset = AnnotatorSet(
            image_id=1,
            by_annotator={1: boxes(1, AGREE), 2: boxes(2, AGREE), 3: ()},
        )
        scores = consensus_scores(aset)
        assert scores[3] == 0.0
        # 1 and 2 lose half their mean to the empty annotator
        assert scores[1] == scores[2] == 0.5


class TestAnnotatorSets:
    def make_dataset(self):
        return Dataset(
            [cat(1)],
            [video(1)],
            [image(1), image(2), image(3)],
            [
                # image 1: two annotators
                ann(1, 1, 1, (0, 0, 10, 10), annotator_id=1),
                ann(2, 1, 1, (0, 0, 10, 10), annotator_id=2),
                # image 2: one annotator plus an untagged annotation
                ann(3, 2, 1, (0, 0, 10, 10), annotator_id=1),
                ann(4, 2, 1, (5, 5, 10, 10)),
                # image 3: nothing
            ],
        )

    def test_groups_only_multi_annotator_images(self):
        sets = annotator_sets(self.make_dataset())
        assert [s.image_id for s in sets] == [1]
        assert sets[0].annotator_ids == [1, 2]

    def test_untagged_annotations_ignored(self):
        sets = annotator_sets(self.make_dataset())
        total = sum(len(v) for v in sets[0].by_annotator.values())
        assert total == 2


def test_scores_use_exact_mean():
    # three annotators, score of 1 is fsum([1.0, 1/3]) / 2
    a_rows = AGREE
    c_rows = [(0, 5, 10, 10)]  # IoU 1/3 with AGREE
    aset = three_way_set([a_rows, a_rows, c_rows])
    scores = consensus_scores(aset)
    expected = math.fsum([1.0, 50.0 / 150.0]) / 2
    assert scores[1] == expected
