"""Embedding registration, cosine matching, and the JSON loaders."""

import json
import math

import numpy as np
import pytest

from egobench.errors import EmbeddingError, ParseError
from egobench.instindex import (
    EmbeddingIndex,
    build_index,
    load_embedding_file,
    load_proposal_file,
    match_proposals,
)

RT2 = math.sqrt(2.0) / 2.0


class TestRegister:
    def test_stores_renormalized_mean(self):
        idx = EmbeddingIndex()
        idx.register(7, [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        stored = idx.embedding(7)
        assert stored == pytest.approx([RT2, RT2], abs=1e-12)
        assert np.linalg.norm(stored) == pytest.approx(1.0, abs=1e-12)

    def test_reference_scale_is_irrelevant(self):
        a, b = EmbeddingIndex(), EmbeddingIndex()
        a.register(1, [np.array([3.0, 4.0])])
        b.register(1, [np.array([0.3, 0.4])])
        assert np.allclose(a.embedding(1), b.embedding(1), atol=1e-15)

    def test_single_reference_is_unit_normalized(self):
        idx = EmbeddingIndex()
        idx.register(1, [np.array([3.0, 4.0])])
        assert idx.embedding(1) == pytest.approx([0.6, 0.8], abs=1e-15)

    def test_cancelling_references_rejected(self):
        idx = EmbeddingIndex()
        with pytest.raises(EmbeddingError) as err:
            idx.register(1, [np.array([1.0, 0.0]), np.array([-1.0, 0.0])])
        assert err.value.code == "DEGENERATE_MEAN"

    def test_zero_reference_rejected(self):
        with pytest.raises(EmbeddingError) as err:
            EmbeddingIndex().register(1, [np.zeros(4)])
        assert err.value.code == "ZERO_VECTOR"

    def test_no_references_rejected(self):
        with pytest.raises(EmbeddingError) as err:
            EmbeddingIndex().register(1, [])
        assert err.value.code == "EMPTY"

    def test_dimension_locked_by_first_entry(self):
        idx = EmbeddingIndex()
        idx.register(1, [np.ones(4)])
        with pytest.raises(EmbeddingError) as err:
            idx.register(2, [np.ones(5)])
        assert err.value.code == "DIM_MISMATCH"

    def test_explicit_dimension_enforced(self):
        idx = EmbeddingIndex(dim=3)
        with pytest.raises(EmbeddingError):
            idx.register(1, [np.ones(4)])

    def test_non_finite_rejected(self):
        with pytest.raises(EmbeddingError) as err:
            EmbeddingIndex().register(1, [np.array([1.0, float("nan")])])
        assert err.value.code == "BAD_VALUE"

    def test_reregistration_replaces_only_that_entry(self):
        idx = EmbeddingIndex()
        idx.register(1, [np.array([1.0, 0.0])])
        idx.register(2, [np.array([0.0, 1.0])])
        before = idx.embedding(2)
        idx.register(1, [np.array([0.0, -1.0])])
        assert np.array_equal(idx.embedding(2), before)
        assert idx.embedding(1) == pytest.approx([0.0, -1.0], abs=0)

    def test_registering_new_targets_never_perturbs_existing(self):
        idx = EmbeddingIndex()
        idx.register(1, [np.array([1.0, 0.0])])
        snapshot = idx.embedding(1)
        for k in range(2, 12):
            idx.register(k, [np.array([float(k), 1.0])])
        assert np.array_equal(idx.embedding(1), snapshot)

    def test_embedding_returns_a_copy(self):
        idx = EmbeddingIndex()
        idx.register(1, [np.array([1.0, 0.0])])
        idx.embedding(1)[0] = 99.0
        assert idx.embedding(1)[0] == 1.0

    def test_container_protocol(self):
        idx = EmbeddingIndex()
        idx.register(5, [np.ones(2)])
        idx.register(3, [np.ones(2)])
        assert len(idx) == 2
        assert 5 in idx and 4 not in idx
        assert idx.instance_ids() == [3, 5]


class TestMatch:
    def test_product_of_rpn_and_similarity(self):
        idx = EmbeddingIndex(threshold=0.5)
        idx.register(1, [np.array([1.0, 0.0])])
        v = np.array([0.9, math.sqrt(1 - 0.81)])  # cosine 0.9 with entry
        hit = idx.match(v, rpn_score=0.5)
        assert hit is not None
        iid, score = hit
        assert iid == 1
        assert score == pytest.approx(0.45, abs=1e-12)

    def test_below_threshold_returns_none(self):
        idx = EmbeddingIndex(threshold=0.8)
        idx.register(1, [np.array([1.0, 0.0])])
        assert idx.match(np.array([RT2, RT2]), rpn_score=1.0) is None

    def test_negative_similarity_clamps_to_zero(self):
        idx = EmbeddingIndex(threshold=0.0)
        idx.register(1, [np.array([1.0, 0.0])])
        hit = idx.match(np.array([-1.0, 0.0]), rpn_score=0.9)
        assert hit == (1, 0.0)  # clamped similarity passes a zero threshold

    def test_similarity_tie_takes_lowest_id(self):
        idx = EmbeddingIndex(threshold=0.5)
        idx.register(9, [np.array([1.0, 0.0])])
        idx.register(4, [np.array([0.0, 1.0])])
        hit = idx.match(np.array([RT2, RT2]), rpn_score=1.0)
        assert hit[0] == 4

    def test_picks_highest_cosine(self):
        idx = EmbeddingIndex(threshold=0.0)
        idx.register(1, [np.array([1.0, 0.0])])
        idx.register(2, [np.array([0.0, 1.0])])
        assert idx.match(np.array([0.9, 0.1]), 1.0)[0] == 1
        assert idx.match(np.array([0.1, 0.9]), 1.0)[0] == 2

    def test_empty_index_matches_nothing(self):
        assert EmbeddingIndex().match(np.ones(3), 0.5) is None

    def test_rpn_score_validated(self):
        idx = EmbeddingIndex()
        idx.register(1, [np.ones(2)])
        with pytest.raises(EmbeddingError) as err:
            idx.match(np.ones(2), rpn_score=1.5)
        assert err.value.code == "BAD_VALUE"

    def test_proposal_dim_checked(self):
        idx = EmbeddingIndex()
        idx.register(1, [np.ones(3)])
        with pytest.raises(EmbeddingError) as err:
            idx.match(np.ones(4), 0.5)
        assert err.value.code == "DIM_MISMATCH"

    def test_threshold_validation(self):
        with pytest.raises(EmbeddingError):
            EmbeddingIndex(threshold=1.5)
        with pytest.raises(EmbeddingError):
            EmbeddingIndex(dim=0)


class TestLoaders:
    def test_embedding_file_round_trip(self, tmp_path):
        path = tmp_path / "emb.json"
        path.write_text(
            json.dumps(
                [
                    {"instance_id": 1, "embedding": [1.0, 0.0]},
                    {"instance_id": 2, "embedding": [0.0, 1.0]},
                    {"instance_id": 1, "embedding": [0.0, 1.0]},
                ]
            )
        )
        records = load_embedding_file(path)
        assert [r[0] for r in records] == [1, 2, 1]
        idx = build_index(records)
        # instance 1 had two references; its entry is their renormalized mean
        assert idx.embedding(1) == pytest.approx([RT2, RT2], abs=1e-12)
        assert len(idx) == 2

    def test_embedding_file_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps([{"instance_id": 1}]))
        with pytest.raises(ParseError, match="embedding"):
            load_embedding_file(bad)
        bad.write_text(json.dumps({"instance_id": 1}))
        with pytest.raises(ParseError, match="array"):
            load_embedding_file(bad)
        bad.write_text(json.dumps([{"instance_id": 1, "embedding": ["x"]}]))
        with pytest.raises(ParseError):
            load_embedding_file(bad)

    def test_proposal_file_and_matching(self, tmp_path):
        epath = tmp_path / "emb.json"
        epath.write_text(json.dumps([{"instance_id": 3, "embedding": [1.0, 0.0]}]))
        ppath = tmp_path / "props.json"
        ppath.write_text(
            json.dumps(
                [
                    {"image_id": 10, "bbox": [0, 0, 5, 5], "score": 0.8, "embedding": [1.0, 0.0]},
                    {"image_id": 11, "bbox": [1, 1, 4, 4], "score": 0.9, "embedding": [0.0, 1.0]},
                ]
            )
        )
        index = build_index(load_embedding_file(epath), threshold=0.5)
        proposals = load_proposal_file(ppath)
        preds = match_proposals(index, proposals)
        # the orthogonal second proposal clamps to 0 and is dropped
        assert len(preds) == 1
        assert preds[0].image_id == 10 and preds[0].label == 3
        assert preds[0].score == pytest.approx(0.8, abs=1e-12)

    def test_proposal_file_errors(self, tmp_path):
        p = tmp_path / "p.json"
        p.write_text(json.dumps([{"image_id": 1, "bbox": [0, 0, 1], "score": 0.5, "embedding": [1.0]}]))
        with pytest.raises(ParseError, match="bbox"):
            load_proposal_file(p)
        p.write_text(json.dumps([{"image_id": 1, "bbox": [0, 0, 1, 1], "score": 2.0, "embedding": [1.0]}]))
        with pytest.raises(ParseError, match="score"):
            load_proposal_file(p)
