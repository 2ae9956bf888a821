import json

import pytest

from helpers import ann, cat, image, video
from egobench.schema import Dataset


@pytest.fixture
def toy_dataset() -> Dataset:
    """Two categories, two videos, four images; instance 10 tracked in both
    videos, a verified negative on image 4."""
    return Dataset(
        categories=[cat(1, "kettle"), cat(2, "mug")],
        videos=[
            video(1, main_instance=10, main_category=1),
            video(2, main_instance=20, main_category=2, distance="medium", background="busy"),
        ],
        images=[
            image(1, video_id=1),
            image(2, video_id=1),
            image(3, video_id=2),
            image(4, video_id=2, negs=(1,)),
        ],
        annotations=[
            ann(1, 1, 1, (10, 10, 60, 40), instance_id=10, is_main=True),
            ann(2, 2, 1, (12, 14, 58, 42), instance_id=10, is_main=True),
            ann(3, 2, 2, (200, 100, 30, 30), instance_id=20),
            ann(4, 3, 2, (220, 120, 32, 28), instance_id=20, is_main=True),
            ann(5, 4, 2, (240, 130, 30, 26), instance_id=20, is_main=True),
        ],
    )


@pytest.fixture
def write_json(tmp_path):
    def _write(name: str, payload) -> str:
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return str(path)

    return _write
