import json

import pytest

from partverify.model import (
    Box,
    EvalConfig,
    PartState,
    Presence,
    ValidationError,
    group_state,
    load_dataset,
    load_detections,
    save_dataset,
    save_detections,
)

MINIMAL = {
    "images": [{"id": "img1", "width": 100, "height": 100}],
    "parts": ["saddle"],
    "annotations": [
        {"image_id": "img1", "part": "saddle", "bbox": [10, 10, 40, 30], "state": "intact"}
    ],
}


def write_doc(tmp_path, doc, name="ann.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_load_minimal_dataset(tmp_path):
    ds = load_dataset(write_doc(tmp_path, MINIMAL))
    assert len(ds.annotations) == 1
    ann = ds.annotations[0]
    assert ann.part_class == "saddle"
    assert ann.state is PartState.INTACT
    assert ann.box == Box(10, 10, 40, 30)
    assert ds.vocabulary == ("saddle",)


def test_unknown_state_rejected(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["annotations"][0]["state"] = "broken"
    with pytest.raises(ValidationError, match=r"annotation #0.*broken"):
        load_dataset(write_doc(tmp_path, doc))


def test_duplicate_image_class_rejected(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["annotations"].append(
        {"image_id": "img1", "part": "saddle", "bbox": [1, 1, 5, 5], "state": "absent"}
    )
    with pytest.raises(ValidationError, match="duplicate"):
        load_dataset(write_doc(tmp_path, doc))


def test_unknown_class_rejected(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["annotations"][0]["part"] = "spoiler"
    with pytest.raises(ValidationError, match="vocabulary"):
        load_dataset(write_doc(tmp_path, doc))


def test_malformed_document(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError, match="malformed"):
        load_dataset(path)


def test_box_clipped_to_bounds(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["annotations"][0]["bbox"] = [-5, -5, 40, 120]
    ds = load_dataset(write_doc(tmp_path, doc))
    assert ds.annotations[0].box == Box(0, 0, 40, 100)


def test_box_fully_outside_rejected(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["annotations"][0]["bbox"] = [200, 200, 250, 250]
    with pytest.raises(ValidationError, match="outside image bounds"):
        load_dataset(write_doc(tmp_path, doc))


def test_xywh_ingestion(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["annotations"][0]["bbox"] = [10, 10, 30, 20]
    ds = load_dataset(write_doc(tmp_path, doc), bbox_format="xywh")
    assert ds.annotations[0].box == Box(10, 10, 40, 30)


def test_unknown_keys_warn(tmp_path):
    doc = json.loads(json.dumps(MINIMAL))
    doc["extra"] = 1
    doc["annotations"][0]["confidence"] = 0.5
    with pytest.warns(UserWarning, match="unknown"):
        ds = load_dataset(write_doc(tmp_path, doc))
    assert len(ds.annotations) == 1


def test_round_trip(tmp_path):
    ds = load_dataset(write_doc(tmp_path, MINIMAL))
    save_dataset(ds, tmp_path / "out.json")
    assert load_dataset(tmp_path / "out.json") == ds


def test_detection_round_trip(tmp_path):
    ds = load_dataset(write_doc(tmp_path, MINIMAL))
    dets = [
        {"image_id": "img1", "part": "saddle", "bbox": [10, 10, 40, 30], "score": 0.75}
    ]
    path = write_doc(tmp_path, dets, "det.json")
    loaded = load_detections(path, ds)
    save_detections(loaded, tmp_path / "det2.json")
    assert load_detections(tmp_path / "det2.json", ds) == loaded


def test_empty_detection_list(tmp_path):
    ds = load_dataset(write_doc(tmp_path, MINIMAL))
    assert load_detections(write_doc(tmp_path, [], "det.json"), ds) == []


def test_detection_score_out_of_range(tmp_path):
    ds = load_dataset(write_doc(tmp_path, MINIMAL))
    dets = [{"image_id": "img1", "part": "saddle", "bbox": [0, 0, 5, 5], "score": 1.2}]
    with pytest.raises(ValidationError, match="score"):
        load_detections(write_doc(tmp_path, dets, "det.json"), ds)


def test_detection_unknown_image(tmp_path):
    ds = load_dataset(write_doc(tmp_path, MINIMAL))
    dets = [{"image_id": "imgX", "part": "saddle", "bbox": [0, 0, 5, 5], "score": 0.5}]
    with pytest.raises(ValidationError, match="unknown image"):
        load_detections(write_doc(tmp_path, dets, "det.json"), ds)


def test_group_state_partition():
    assert group_state(PartState.INTACT) is Presence.PRESENT
    assert group_state(PartState.DAMAGED) is Presence.PRESENT
    assert group_state(PartState.ABSENT) is Presence.MISSING
    assert group_state(PartState.OCCLUDED) is Presence.MISSING
    groups = [group_state(s) for s in PartState]
    assert groups.count(Presence.PRESENT) == 2
    assert groups.count(Presence.MISSING) == 2


def test_box_invariants():
    with pytest.raises(ValueError):
        Box(10, 0, 5, 5)
    with pytest.raises(ValueError):
        Box(0, 0, float("nan"), 5)
    b = Box(2, 3, 10, 7)
    assert b.width == 8 and b.height == 4 and b.area == 32
    assert b.center == (6, 5)


def test_eval_config_validation():
    cfg = EvalConfig()
    assert cfg.t_present == 0.5 and cfg.t_missing == 0.1 and cfg.beta == 0.1
    assert cfg.ap_iou_grid == tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
    with pytest.raises(ValueError):
        EvalConfig(t_present=1.5)
    with pytest.raises(ValueError):
        EvalConfig(beta=-1)
    with pytest.raises(ValueError):
        EvalConfig(ap_iou_grid=(0.5, 0.5))


def test_dataset_rejects_unknown_image_reference():
    from conftest import make_dataset

    with pytest.raises(ValidationError, match="unknown image"):
        make_dataset(
            vocab=["a"],
            images=[("im1", 10, 10)],
            annotations=[("im2", "a", (0, 0, 5, 5), "intact")],
        )
