import math

import numpy as np
import pytest

from conftest import det, make_dataset
from partverify.metrics import (
    UndefinedMetricError,
    ap_report,
    average_precision,
    compute_fvv,
    layout_stats,
    recall,
    recall_curve,
    verify,
)
from partverify.model import EvalConfig, Presence


# ---------------------------------------------------------------------------
# compute_fvv

def test_fvv_reference_points():
    assert compute_fvv(0.83, 0.28, 0.1) == pytest.approx(0.72, abs=0.005)
    assert compute_fvv(0.90, 0.62, 0.1) == pytest.approx(0.38, abs=0.005)


def test_fvv_perfect_verifier():
    assert compute_fvv(1.0, 0.0, 0.1) == 1.0


def test_fvv_all_missing_hallucinated():
    assert compute_fvv(0.7, 1.0, 0.1) == 0.0


def test_fvv_zero_denominator():
    assert compute_fvv(0.0, 1.0, 0.1) == 0.0
    assert compute_fvv(0.0, 0.5, 0.0) == 0.0


def test_fvv_beta_zero_identity():
    rng = np.random.default_rng(3)
    for _ in range(100):
        r_p = float(rng.uniform(0.01, 1.0))
        r_m = float(rng.uniform(0.0, 1.0))
        assert compute_fvv(r_p, r_m, 0.0) == pytest.approx(1.0 - r_m, abs=1e-12)


def test_fvv_monotone():
    rng = np.random.default_rng(4)
    for _ in range(100):
        r_p = float(rng.uniform(0.05, 0.95))
        r_m = float(rng.uniform(0.05, 0.95))
        eps = 0.01
        assert compute_fvv(r_p + eps, r_m, 0.1) > compute_fvv(r_p, r_m, 0.1)
        assert compute_fvv(r_p, r_m + eps, 0.1) < compute_fvv(r_p, r_m, 0.1)


def test_fvv_domain_errors():
    with pytest.raises(ValueError):
        compute_fvv(1.2, 0.5, 0.1)
    with pytest.raises(ValueError):
        compute_fvv(0.5, -0.1, 0.1)
    with pytest.raises(ValueError):
        compute_fvv(0.5, 0.5, -1.0)
    with pytest.raises(ValueError):
        compute_fvv(float("nan"), 0.5, 0.1)


# ---------------------------------------------------------------------------
# recall / verify

def test_missing_recall_fixture(two_image_dataset, two_image_detections):
    # 4 missing parts, hits enumerated in the fixture: (im1, a) and (im2, a).
    r = recall(two_image_dataset, two_image_detections, Presence.MISSING, t=0.1)
    assert r.value == 0.5
    assert (r.hits, r.total) == (2, 4)
    assert (r.per_class["a"].hits, r.per_class["a"].total) == (2, 2)
    assert (r.per_class["b"].hits, r.per_class["b"].total) == (0, 2)


def test_present_recall_fixture(two_image_dataset, two_image_detections):
    r = recall(two_image_dataset, two_image_detections, Presence.PRESENT, t=0.5)
    assert r.value == 0.25  # only (im1, c) has a detection


def test_recall_exact_detections_all_hit(two_image_dataset):
    dets = [
        det(a.image_id, a.part_class, a.box.as_list(), 0.9)
        for a in two_image_dataset.annotations
        if a.presence is Presence.PRESENT
    ]
    for t in (0.0, 0.5, 1.0):
        assert recall(two_image_dataset, dets, Presence.PRESENT, t).value == 1.0


def test_recall_empty_detections(two_image_dataset):
    assert recall(two_image_dataset, [], Presence.PRESENT, 0.0).value == 0.0
    assert recall(two_image_dataset, [], Presence.MISSING, 0.0).value == 0.0


def test_recall_empty_group_error():
    ds = make_dataset(
        vocab=["a"],
        images=[("im1", 10, 10)],
        annotations=[("im1", "a", (0, 0, 5, 5), "intact")],
    )
    with pytest.raises(UndefinedMetricError):
        recall(ds, [], Presence.MISSING, 0.1)


def test_adding_detection_never_decreases_recall(two_image_dataset, two_image_detections):
    rng = np.random.default_rng(7)
    base = recall(two_image_dataset, two_image_detections, Presence.MISSING, 0.1).value
    for _ in range(50):
        x0, y0 = rng.integers(0, 80, 2)
        extra = det("im1", "b", (float(x0), float(y0), float(x0 + 15), float(y0 + 15)),
                    float(rng.uniform()))
        grown = recall(
            two_image_dataset, two_image_detections + [extra], Presence.MISSING, 0.1
        ).value
        assert grown >= base


def test_verify_fixture(two_image_dataset, two_image_detections):
    config = EvalConfig(t_present=0.5, t_missing=0.1, beta=0.1)
    report = verify(two_image_dataset, two_image_detections, config)
    assert report.r_present == 0.25
    assert report.r_missing == 0.5
    assert report.f_vv == compute_fvv(0.25, 0.5, 0.1)
    assert report.per_class["a"].missing.value == 1.0
    assert report.per_class["c"].present.value == 0.5


def test_verify_consistency_with_fvv(two_image_dataset, two_image_detections):
    report = verify(two_image_dataset, two_image_detections, EvalConfig())
    assert report.f_vv == compute_fvv(report.r_present, report.r_missing, 0.1)


def test_verify_prior_like_at_zero(two_image_dataset):
    # One detection per (image, class) anywhere hits everything at t=0.
    dets = [
        det(im.image_id, cls, (0, 0, 5, 5), 0.6)
        for im in two_image_dataset.images
        for cls in two_image_dataset.vocabulary
    ]
    report = verify(two_image_dataset, dets, EvalConfig(t_present=0.0, t_missing=0.0))
    assert (report.r_present, report.r_missing, report.f_vv) == (1.0, 1.0, 0.0)


def test_report_permutation_invariance(two_image_dataset, two_image_detections):
    rng = np.random.default_rng(11)
    config = EvalConfig()
    base = verify(two_image_dataset, two_image_detections, config)
    for _ in range(20):
        perm = [two_image_detections[i] for i in rng.permutation(len(two_image_detections))]
        assert verify(two_image_dataset, perm, config) == base


def test_threads_do_not_change_results(two_image_dataset, two_image_detections):
    config = EvalConfig()
    assert verify(two_image_dataset, two_image_detections, config, threads=8) == verify(
        two_image_dataset, two_image_detections, config, threads=1
    )


# ---------------------------------------------------------------------------
# recall_curve

GRID = tuple(round(0.05 * i, 2) for i in range(21))


def test_curve_exact_detections_constant_one(two_image_dataset):
    dets = [
        det(a.image_id, a.part_class, a.box.as_list(), 0.9)
        for a in two_image_dataset.annotations
        if a.presence is Presence.PRESENT
    ]
    curve = recall_curve(two_image_dataset, dets, Presence.PRESENT, GRID)
    assert curve.recalls == tuple(1.0 for _ in GRID)


def test_curve_empty_detections_constant_zero(two_image_dataset):
    curve = recall_curve(two_image_dataset, [], Presence.MISSING, GRID)
    assert curve.recalls == tuple(0.0 for _ in GRID)


def test_curve_matches_pointwise_recall(two_image_dataset, two_image_detections):
    curve = recall_curve(two_image_dataset, two_image_detections, Presence.MISSING, GRID)
    for t, r in zip(curve.thresholds, curve.recalls):
        assert r == recall(two_image_dataset, two_image_detections, Presence.MISSING, t).value
    assert all(a >= b for a, b in zip(curve.recalls, curve.recalls[1:]))


def test_curve_rejects_bad_grid(two_image_dataset):
    with pytest.raises(ValueError):
        recall_curve(two_image_dataset, [], Presence.MISSING, (0.5, 0.5))
    with pytest.raises(ValueError):
        recall_curve(two_image_dataset, [], Presence.MISSING, (0.5, 1.2))


# ---------------------------------------------------------------------------
# average precision

def ap_fixture():
    ds = make_dataset(
        vocab=["a"],
        images=[("im1", 100, 100), ("im2", 100, 100)],
        annotations=[
            ("im1", "a", (0, 0, 10, 10), "intact"),
            ("im2", "a", (0, 0, 10, 10), "intact"),
        ],
    )
    return ds


def test_ap_perfect_detections():
    ds = ap_fixture()
    dets = [det("im1", "a", (0, 0, 10, 10), 0.9), det("im2", "a", (0, 0, 10, 10), 0.8)]
    assert average_precision(ds, dets, "a", EvalConfig().ap_iou_grid) == 1.0


def test_ap_no_detections():
    assert average_precision(ap_fixture(), [], "a", (0.5,)) == 0.0


def test_ap_hand_computed_sequence():
    # Ranking: TP (recall .5, prec 1), FP (prec 1/2), TP (recall 1, prec 2/3).
    # 101-point sums 51 samples at precision 1 and 50 at 2/3.
    ds = ap_fixture()
    dets = [
        det("im1", "a", (0, 0, 10, 10), 0.9),
        det("im1", "a", (50, 50, 60, 60), 0.8),
        det("im2", "a", (0, 0, 10, 10), 0.7),
    ]
    expected = (51 * 1.0 + 50 * (2 / 3)) / 101
    assert average_precision(ds, dets, "a", (0.5,)) == pytest.approx(expected, abs=1e-12)


def test_ap_11_point_variant():
    ds = ap_fixture()
    dets = [
        det("im1", "a", (0, 0, 10, 10), 0.9),
        det("im1", "a", (50, 50, 60, 60), 0.8),
        det("im2", "a", (0, 0, 10, 10), 0.7),
    ]
    expected = (6 * 1.0 + 5 * (2 / 3)) / 11
    got = average_precision(ds, dets, "a", (0.5,), interpolation="11")
    assert got == pytest.approx(expected, abs=1e-12)


def test_ap_zero_present_gt_excluded():
    ds = make_dataset(
        vocab=["a", "b"],
        images=[("im1", 100, 100)],
        annotations=[
            ("im1", "a", (0, 0, 10, 10), "intact"),
            ("im1", "b", (20, 20, 30, 30), "absent"),
        ],
    )
    dets = [det("im1", "a", (0, 0, 10, 10), 0.9)]
    assert average_precision(ds, dets, "b", (0.5,)) is None
    report = ap_report(ds, dets, EvalConfig())
    assert report.per_class["b"] is None
    assert report.excluded == ("b",)
    assert report.mean_ap == 1.0  # mean over defined classes only


def test_ap_missing_parts_never_ground_truth():
    # A hallucination on a missing part cannot be a TP for AP.
    ds = make_dataset(
        vocab=["a"],
        images=[("im1", 100, 100), ("im2", 100, 100)],
        annotations=[
            ("im1", "a", (0, 0, 10, 10), "intact"),
            ("im2", "a", (0, 0, 10, 10), "absent"),
        ],
    )
    dets = [
        det("im1", "a", (0, 0, 10, 10), 0.9),
        det("im2", "a", (0, 0, 10, 10), 0.8),  # perfect box on the absent part
    ]
    # One GT, ranking: TP then FP at same recall 1.0 -> AP still 1.0.
    assert average_precision(ds, dets, "a", (0.5,)) == 1.0


def test_ap_vs_fvv_dissociation(two_image_dataset):
    """Appending strictly-lowest-score hallucinations never moves AP but
    strictly degrades verification."""
    present = [
        det(a.image_id, a.part_class, a.box.as_list(), 0.9)
        for a in two_image_dataset.annotations
        if a.presence is Presence.PRESENT
    ]
    halluc = [
        det(a.image_id, a.part_class, a.box.as_list(), 0.05)
        for a in two_image_dataset.annotations
        if a.presence is Presence.MISSING
    ]
    config = EvalConfig()
    ap_before = ap_report(two_image_dataset, present, config)
    ap_after = ap_report(two_image_dataset, present + halluc, config)
    assert ap_before.per_class == ap_after.per_class  # exact
    before = verify(two_image_dataset, present, config)
    after = verify(two_image_dataset, present + halluc, config)
    assert after.r_missing > before.r_missing
    assert after.f_vv < before.f_vv


# ---------------------------------------------------------------------------
# layout stats

def test_layout_single_annotation():
    ds = make_dataset(
        vocab=["a"],
        images=[("im1", 100, 100)],
        annotations=[("im1", "a", (10, 20, 30, 60), "intact")],
    )
    stats = layout_stats(ds)
    s = stats.per_class["a"]
    assert (s.mean_cx, s.mean_cy) == (20, 40)
    assert (s.mean_w, s.mean_h) == (20, 40)
    assert (s.std_cx, s.std_cy, s.std_w, s.std_h) == (0, 0, 0, 0)


def test_layout_mean_of_two():
    ds = make_dataset(
        vocab=["a"],
        images=[("im1", 100, 100), ("im2", 100, 100)],
        annotations=[
            ("im1", "a", (5, 5, 15, 15), "intact"),
            ("im2", "a", (25, 25, 35, 35), "absent"),
        ],
    )
    s = layout_stats(ds).per_class["a"]
    assert (s.mean_cx, s.mean_cy) == (20, 20)
    assert s.count == 2


def test_layout_state_ratios_sum_to_one(two_image_dataset):
    stats = layout_stats(two_image_dataset)
    assert math.isclose(sum(stats.state_ratios.values()), 1.0, abs_tol=1e-9)
    assert stats.state_counts["intact"] == 3
    assert stats.state_counts["absent"] == 3
    assert stats.state_counts["occluded"] == 1
    assert stats.state_counts["damaged"] == 1
