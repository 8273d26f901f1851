import pytest

from partverify.model import (
    Box,
    Dataset,
    Detection,
    ImageInfo,
    PartAnnotation,
    PartState,
)

STATES = {
    "intact": PartState.INTACT,
    "damaged": PartState.DAMAGED,
    "absent": PartState.ABSENT,
    "occluded": PartState.OCCLUDED,
}


def make_dataset(vocab, images, annotations):
    """annotations: (image_id, class, (x0, y0, x1, y1), state-name) tuples."""
    return Dataset(
        images=tuple(ImageInfo(i, w, h) for i, w, h in images),
        vocabulary=tuple(vocab),
        annotations=tuple(
            PartAnnotation(img, cls, Box(*bbox), STATES[state])
            for img, cls, bbox, state in annotations
        ),
    )


def det(image_id, cls, bbox, score):
    return Detection(image_id, cls, Box(*bbox), score)


@pytest.fixture
def two_image_dataset():
    """Hand-built fixture: 4 present and 4 missing parts over 2 images.

    Missing parts: (im1, a), (im1, b), (im2, a), (im2, b).
    Present parts: (im1, c), (im1, d), (im2, c), (im2, d).
    """
    return make_dataset(
        vocab=["a", "b", "c", "d"],
        images=[("im1", 100, 100), ("im2", 100, 100)],
        annotations=[
            ("im1", "a", (10, 10, 30, 30), "absent"),
            ("im1", "b", (40, 40, 60, 60), "occluded"),
            ("im1", "c", (70, 70, 90, 90), "intact"),
            ("im1", "d", (10, 60, 30, 80), "intact"),
            ("im2", "a", (10, 10, 30, 30), "absent"),
            ("im2", "b", (40, 40, 60, 60), "absent"),
            ("im2", "c", (70, 70, 90, 90), "intact"),
            ("im2", "d", (50, 10, 70, 30), "damaged"),
        ],
    )


@pytest.fixture
def two_image_detections():
    """Detections for the fixture above. Hand enumeration:

    - (im1, a): det at (12,12,32,32), IoU = 324/476 ~ 0.68 -> hit at 0.1
    - (im2, a): exact box -> IoU 1.0, hit
    - (im2, b): disjoint det -> IoU 0, no hit at 0.1
    - (im1, b): no detection
    - (im1, c): exact box -> present hit at 0.5; other present parts have none
    """
    return [
        det("im1", "a", (12, 12, 32, 32), 0.9),
        det("im2", "a", (10, 10, 30, 30), 0.7),
        det("im2", "b", (80, 80, 95, 95), 0.6),
        det("im1", "c", (70, 70, 90, 90), 0.8),
    ]
