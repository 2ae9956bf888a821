"""Data model: parsing, integrity, round-trips, and the validator."""

import json

import pytest

from helpers import ann, cat, image, pred_records, video
from egobench.errors import IntegrityError, ParseError
from egobench.geometry import Box
from egobench.schema import (
    Dataset,
    dataset_from_dict,
    dataset_to_dict,
    load_dataset,
    load_predictions,
    predictions_from_records,
    save_dataset,
    subset_images,
    validate,
)


def codes(violations):
    return sorted(v.code for v in violations)


class TestRoundTrip:
    def test_save_load_preserves_everything(self, toy_dataset, tmp_path):
        path = tmp_path / "ds.json"
        save_dataset(toy_dataset, path)
        loaded = load_dataset(path)
        assert dataset_to_dict(loaded) == dataset_to_dict(toy_dataset)
        assert loaded.counts() == toy_dataset.counts()

    def test_save_output_is_stable(self, toy_dataset, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_dataset(toy_dataset, p1)
        save_dataset(load_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unknown_fields_pass_through(self, tmp_path):
        payload = {
            "categories": [{"id": 1, "name": "kettle", "color": "red"}],
            "videos": [],
            "images": [],
            "annotations": [],
        }
        ds = dataset_from_dict(payload)
        assert ds.categories[1].extra == {"color": "red"}
        assert dataset_to_dict(ds)["categories"][0]["color"] == "red"

    def test_neg_category_ids_round_trip(self):
        ds = Dataset([cat(1), cat(2)], [video(1)], [image(1, negs=(2,))], [])
        out = dataset_to_dict(ds)["images"][0]["neg_category_ids"]
        assert out == [2]


class TestParseErrors:
    def test_invalid_json_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"categories": [,]}')
        with pytest.raises(ParseError, match="invalid JSON at line 1"):
            load_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="cannot read"):
            load_dataset(tmp_path / "absent.json")

    def test_missing_top_level_key(self):
        with pytest.raises(ParseError, match="missing top-level key 'videos'"):
            dataset_from_dict({"categories": [], "images": [], "annotations": []})

    def test_non_object_payload(self):
        with pytest.raises(ParseError, match="must be a JSON object"):
            dataset_from_dict([1, 2, 3])

    def test_bad_enum_rejected_at_parse(self):
        payload = {
            "categories": [{"id": 1, "name": "kettle"}],
            "videos": [
                {
                    "id": 1,
                    "participant_id": 1,
                    "device": "webcam",
                    "main_instance_id": 1,
                    "main_category_id": 1,
                    "distance": "near",
                    "motion": "horizontal",
                    "background": "simple",
                    "lighting": "bright",
                }
            ],
            "images": [],
            "annotations": [],
        }
        with pytest.raises(ParseError, match="videos\\[0\\].*device"):
            dataset_from_dict(payload)

    def test_bbox_must_have_four_numbers(self):
        payload = {
            "categories": [{"id": 1, "name": "kettle"}],
            "videos": [],
            "images": [],
            "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [1, 2, 3]}],
        }
        with pytest.raises(ParseError, match="bbox"):
            dataset_from_dict(payload, check_integrity=False)

    def test_bool_is_not_an_int(self):
        payload = {
            "categories": [{"id": True, "name": "kettle"}],
            "videos": [],
            "images": [],
            "annotations": [],
        }
        with pytest.raises(ParseError, match="categories\\[0\\]"):
            dataset_from_dict(payload)


class TestIntegrity:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(IntegrityError, match="duplicate category id 1"):
            Dataset([cat(1), cat(1)], [], [], [])

    def test_dangling_video_ref(self):
        with pytest.raises(IntegrityError, match="image 1 references missing video 9"):
            dataset_from_dict(
                {
                    "categories": [{"id": 1, "name": "kettle"}],
                    "videos": [],
                    "images": [
                        {"id": 1, "video_id": 9, "width": 10, "height": 10, "frame_index": 0}
                    ],
                    "annotations": [],
                }
            )

    def test_instance_category_conflict_names_annotation(self):
        payload = dataset_to_dict(
            Dataset(
                [cat(1), cat(2)],
                [video(1)],
                [image(1), image(2)],
                [
                    ann(1, 1, 1, (0, 0, 5, 5), instance_id=7),
                    ann(2, 2, 2, (0, 0, 5, 5), instance_id=7),
                ],
            )
        )
        with pytest.raises(
            IntegrityError, match=r"instance 7 has inconsistent category \(1 vs 2 at annotation 2\)"
        ):
            dataset_from_dict(payload)

    def test_check_can_be_deferred_to_validate(self):
        payload = {
            "categories": [{"id": 1, "name": "kettle"}],
            "videos": [],
            "images": [{"id": 1, "video_id": 9, "width": 10, "height": 10, "frame_index": 0}],
            "annotations": [],
        }
        ds = dataset_from_dict(payload, check_integrity=False)
        assert "DANGLING_REF" in codes(validate(ds))

    def test_taxonomy_cycle_detected(self):
        with pytest.raises(IntegrityError, match="cycle"):
            dataset_from_dict(
                {
                    "categories": [
                        {"id": 1, "name": "a", "parent_id": 2},
                        {"id": 2, "name": "b", "parent_id": 1},
                    ],
                    "videos": [],
                    "images": [],
                    "annotations": [],
                }
            )


class TestValidate:
    def test_clean_dataset_has_no_violations(self, toy_dataset):
        assert validate(toy_dataset) == []

    def test_empty_name(self):
        ds = Dataset([cat(1, name="")], [], [], [])
        assert codes(validate(ds)) == ["EMPTY_NAME"]

    def test_dangling_parent(self):
        ds = Dataset([cat(1, parent=99)], [], [], [])
        assert codes(validate(ds)) == ["DANGLING_REF"]

    def test_cyclic_taxonomy(self):
        ds = Dataset([cat(1, parent=2), cat(2, parent=1)], [], [], [])
        assert "CYCLIC_TAXONOMY" in codes(validate(ds))

    def test_bad_enum(self):
        import dataclasses

        broken = Dataset([cat(1)], [dataclasses.replace(video(1), device="webcam")], [], [])
        assert "BAD_ENUM" in codes(validate(broken))

    def test_neg_contradiction(self):
        ds = Dataset(
            [cat(1)],
            [video(1)],
            [image(1, negs=(1,))],
            [ann(1, 1, 1, (0, 0, 5, 5))],
        )
        assert "NEG_CONTRADICTION" in codes(validate(ds))

    def test_degenerate_box(self):
        ds = Dataset([cat(1)], [video(1)], [image(1)], [ann(1, 1, 1, (0, 0, 0, 5))])
        assert "DEGENERATE_BOX" in codes(validate(ds))

    def test_box_out_of_bounds(self):
        ds = Dataset([cat(1)], [video(1)], [image(1, width=100, height=100)], [ann(1, 1, 1, (90, 0, 20, 5))])
        assert "BOX_OUT_OF_BOUNDS" in codes(validate(ds))

    def test_half_pixel_tolerance_on_bounds(self):
        ds = Dataset(
            [cat(1)],
            [video(1)],
            [image(1, width=100, height=100)],
            [ann(1, 1, 1, (-0.4, 0, 100.3, 99.9))],
        )
        assert validate(ds) == []

    def test_instance_category_conflict(self):
        ds = Dataset(
            [cat(1), cat(2)],
            [video(1)],
            [image(1), image(2)],
            [ann(1, 1, 1, (0, 0, 5, 5), instance_id=7), ann(2, 2, 2, (0, 0, 5, 5), instance_id=7)],
        )
        assert "INSTANCE_CATEGORY_CONFLICT" in codes(validate(ds))

    def test_violations_carry_subject_ids(self):
        ds = Dataset([cat(1)], [video(1)], [image(1)], [ann(4, 1, 1, (0, 0, 0, 5))])
        v = validate(ds)[0]
        assert (v.code, v.subject_id) == ("DEGENERATE_BOX", 4)


class TestPredictions:
    def test_category_mode_load(self, toy_dataset, write_json):
        path = write_json(
            "preds.json",
            [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9}],
        )
        out = load_predictions(path, "category", dataset=toy_dataset)
        assert out[0].label == 1 and out[0].bbox == Box(0, 0, 10, 10)

    def test_instance_mode_uses_instance_key(self, toy_dataset):
        recs = [{"image_id": 1, "instance_id": 10, "bbox": [0, 0, 10, 10], "score": 0.5}]
        out = predictions_from_records(recs, "instance", dataset=toy_dataset)
        assert out[0].label == 10

    def test_unknown_category_rejected(self, toy_dataset):
        recs = [{"image_id": 1, "category_id": 99, "bbox": [0, 0, 10, 10], "score": 0.5}]
        with pytest.raises(ParseError, match="unknown category_id 99"):
            predictions_from_records(recs, "category", dataset=toy_dataset)

    def test_unknown_image_rejected(self, toy_dataset):
        recs = [{"image_id": 99, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.5}]
        with pytest.raises(ParseError, match="unknown image id 99"):
            predictions_from_records(recs, "category", dataset=toy_dataset)

    def test_extra_labels_extend_known_set(self, toy_dataset):
        recs = [{"image_id": 1, "instance_id": 777, "bbox": [0, 0, 10, 10], "score": 0.5}]
        with pytest.raises(ParseError):
            predictions_from_records(recs, "instance", dataset=toy_dataset)
        out = predictions_from_records(recs, "instance", dataset=toy_dataset, extra_labels=[777])
        assert out[0].label == 777

    def test_score_out_of_range(self):
        recs = [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 1.5}]
        with pytest.raises(ParseError, match="score out of range"):
            predictions_from_records(recs, "category")

    def test_degenerate_prediction_box(self):
        recs = [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 0, 10], "score": 0.5}]
        with pytest.raises(ParseError, match="degenerate box"):
            predictions_from_records(recs, "category")

    def test_bad_mode(self, write_json):
        path = write_json("p.json", [])
        with pytest.raises(ParseError, match="mode must be"):
            load_predictions(path, "boxes")

    def test_records_round_trip_through_helper(self, toy_dataset):
        from helpers import pred

        ps = [pred(1, 1, (0, 0, 10, 10), 0.25)]
        recs = pred_records(ps, "category")
        assert predictions_from_records(recs, "category", dataset=toy_dataset) == ps


class TestSubset:
    def test_subset_keeps_categories_and_videos(self, toy_dataset):
        sub = subset_images(toy_dataset, {1, 2})
        assert sorted(sub.images) == [1, 2]
        assert sorted(sub.categories) == [1, 2]
        assert sorted(sub.videos) == [1, 2]
        assert sorted(sub.annotations) == [1, 2, 3]

    def test_subset_of_nothing(self, toy_dataset):
        sub = subset_images(toy_dataset, set())
        assert sub.images == {} and sub.annotations == {}
