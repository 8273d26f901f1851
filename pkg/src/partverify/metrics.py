"""Scalar metrics and curves for part verification.

The headline score combines present recall r_p and missing recall r_m into
a recall-based F-beta:

    f_vv = (1 + beta^2) * r_p * (1 - r_m) / (beta^2 * (1 - r_m) + r_p)

A good verifier finds present parts (high r_p) while firing on as few
missing parts as possible (low r_m); beta < 1 makes a hallucinated missing
part costlier than an undetected present one. Average precision is the
conventional detection metric kept here for contrast: appending
low-confidence hallucinations leaves it unchanged while f_vv degrades.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, TypeVar

import numpy as np

from .matching import best_iou_for_box, greedy_ap_match, group_detections
from .model import Dataset, Detection, EvalConfig, PartAnnotation, PartState, Presence

T = TypeVar("T")
U = TypeVar("U")


class UndefinedMetricError(ValueError):
    """Requested metric is undefined for this dataset (e.g. empty group)."""


def map_ordered(
    fn: Callable[[T], U], items: Sequence[T], threads: int | None = None
) -> list[U]:
    """Apply ``fn`` over ``items`` preserving order, optionally on a pool.

    Results are identical for any thread count; the pool only changes who
    computes each element.
    """
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def compute_fvv(r_present: float, r_missing: float, beta: float) -> float:
    """Recall-based F-beta verification score.

    Defined as 0 when the denominator vanishes (r_present = 0 with
    r_missing = 1 or beta = 0): the worst verifier scores 0.
    """
    for name, v in (("r_present", r_present), ("r_missing", r_missing)):
        if not (isinstance(v, (int, float)) and math.isfinite(v) and 0.0 <= v <= 1.0):
            raise ValueError(f"{name} must be a finite value in [0, 1], got {v!r}")
    if not (isinstance(beta, (int, float)) and math.isfinite(beta) and beta >= 0.0):
        raise ValueError(f"beta must be finite and non-negative, got {beta!r}")
    b2 = beta * beta
    denominator = b2 * (1.0 - r_missing) + r_present
    if denominator == 0.0:
        return 0.0
    return (1.0 + b2) * r_present * (1.0 - r_missing) / denominator


@dataclass(frozen=True)
class ClassRecall:
    """Hit count over support for one class and presence group."""

    hits: int
    total: int

    @property
    def value(self) -> float | None:
        return self.hits / self.total if self.total else None


@dataclass(frozen=True)
class GroupRecall:
    """Recall of one presence group with its per-class breakdown."""

    group: Presence
    hits: int
    total: int
    per_class: dict[str, ClassRecall]

    @property
    def value(self) -> float:
        return self.hits / self.total


@dataclass(frozen=True)
class ClassVerification:
    present: ClassRecall
    missing: ClassRecall


@dataclass(frozen=True)
class VerificationReport:
    """Present/missing recall and their F-beta combination."""

    r_present: float
    r_missing: float
    f_vv: float
    per_class: dict[str, ClassVerification]
    config: EvalConfig

    def to_dict(self) -> dict:
        return {
            "r_present": self.r_present,
            "r_missing": self.r_missing,
            "f_vv": self.f_vv,
            "per_class": {
                name: {
                    "r_present": cv.present.value,
                    "n_present": cv.present.total,
                    "present_hits": cv.present.hits,
                    "r_missing": cv.missing.value,
                    "n_missing": cv.missing.total,
                    "missing_hits": cv.missing.hits,
                }
                for name, cv in self.per_class.items()
            },
            "config": self.config.to_dict(),
        }


@dataclass(frozen=True)
class RecallCurve:
    """Recall of one presence group swept over IoU thresholds."""

    group: Presence
    thresholds: tuple[float, ...]
    recalls: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "group": self.group.value,
            "thresholds": list(self.thresholds),
            "recalls": list(self.recalls),
        }


@dataclass(frozen=True)
class ApReport:
    """Per-class average precision over an IoU grid and the summary mean."""

    per_class: dict[str, float | None]
    mean_ap: float | None
    iou_grid: tuple[float, ...]
    interpolation: str
    excluded: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "per_class": dict(self.per_class),
            "mean_ap": self.mean_ap,
            "iou_grid": list(self.iou_grid),
            "interpolation": self.interpolation,
            "excluded_classes": list(self.excluded),
        }


@dataclass(frozen=True)
class BoxStats:
    """Mean and (population) standard deviation of box center and size."""

    count: int
    mean_cx: float
    mean_cy: float
    mean_w: float
    mean_h: float
    std_cx: float
    std_cy: float
    std_w: float
    std_h: float


@dataclass(frozen=True)
class LayoutStats:
    """Per-class box statistics plus the global state distribution."""

    per_class: dict[str, BoxStats]
    state_counts: dict[str, int]
    state_ratios: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "per_class": {
                name: {
                    "count": s.count,
                    "mean_center": [s.mean_cx, s.mean_cy],
                    "mean_size": [s.mean_w, s.mean_h],
                    "std_center": [s.std_cx, s.std_cy],
                    "std_size": [s.std_w, s.std_h],
                }
                for name, s in self.per_class.items()
            },
            "state_counts": dict(self.state_counts),
            "state_ratios": dict(self.state_ratios),
        }


def _group_best_ious(
    dataset: Dataset,
    dets: Sequence[Detection],
    group: Presence,
    score_threshold: float,
    threads: int | None = None,
) -> list[tuple[PartAnnotation, bool, float]]:
    """Per part of the group: (annotation, any candidate survives, best IoU).

    Candidates of a part are the detections sharing its image and class.
    Work fans out per image; collection order is fixed by dataset order.
    """
    index = group_detections(dets)
    parts_by_image: dict[str, list[PartAnnotation]] = {}
    for ann in dataset.annotations:
        if ann.presence is group:
            parts_by_image.setdefault(ann.image_id, []).append(ann)
    image_ids = [im.image_id for im in dataset.images if im.image_id in parts_by_image]

    def one_image(image_id: str) -> list[tuple[PartAnnotation, bool, float]]:
        rows = []
        for ann in parts_by_image[image_id]:
            candidates = index.get((ann.image_id, ann.part_class), ())
            any_det, best = best_iou_for_box(ann.box, candidates, score_threshold)
            rows.append((ann, any_det, best))
        return rows

    out: list[tuple[PartAnnotation, bool, float]] = []
    for rows in map_ordered(one_image, image_ids, threads):
        out.extend(rows)
    return out


def recall(
    dataset: Dataset,
    dets: Sequence[Detection],
    group: Presence,
    t: float,
    score_threshold: float = 0.0,
    threads: int | None = None,
) -> GroupRecall:
    """Fraction of the group's parts hit at IoU >= ``t``.

    A part is hit when at least one same-image same-class detection survives
    the score threshold and overlaps it with IoU >= t. Raises
    UndefinedMetricError when the dataset has no parts of the group.
    """
    rows = _group_best_ious(dataset, dets, group, score_threshold, threads)
    if not rows:
        raise UndefinedMetricError(
            f"dataset contains no parts in the {group.value!r} group"
        )
    hits = 0
    per_class_hits = {name: 0 for name in dataset.vocabulary}
    per_class_total = {name: 0 for name in dataset.vocabulary}
    for ann, any_det, best in rows:
        per_class_total[ann.part_class] += 1
        if any_det and best >= t:
            hits += 1
            per_class_hits[ann.part_class] += 1
    per_class = {
        name: ClassRecall(per_class_hits[name], per_class_total[name])
        for name in dataset.vocabulary
    }
    return GroupRecall(group=group, hits=hits, total=len(rows), per_class=per_class)


def verify(
    dataset: Dataset,
    dets: Sequence[Detection],
    config: EvalConfig,
    threads: int | None = None,
) -> VerificationReport:
    """Full verification report: present recall at t_present, missing recall
    at t_missing, and their F-beta combination."""
    present = recall(
        dataset, dets, Presence.PRESENT, config.t_present, config.score_threshold, threads
    )
    missing = recall(
        dataset, dets, Presence.MISSING, config.t_missing, config.score_threshold, threads
    )
    per_class = {
        name: ClassVerification(present.per_class[name], missing.per_class[name])
        for name in dataset.vocabulary
    }
    return VerificationReport(
        r_present=present.value,
        r_missing=missing.value,
        f_vv=compute_fvv(present.value, missing.value, config.beta),
        per_class=per_class,
        config=config,
    )


def recall_curve(
    dataset: Dataset,
    dets: Sequence[Detection],
    group: Presence,
    thresholds: Sequence[float],
    score_threshold: float = 0.0,
    threads: int | None = None,
) -> RecallCurve:
    """Recall evaluated independently at each threshold of an increasing grid.

    Best IoUs are computed once per part; the sweep then counts parts whose
    best IoU reaches each threshold, which equals re-running ``recall``
    point-wise.
    """
    ts = tuple(float(t) for t in thresholds)
    if any(not (0.0 <= t <= 1.0) for t in ts):
        raise ValueError("thresholds must lie in [0, 1]")
    if any(a >= b for a, b in zip(ts, ts[1:])):
        raise ValueError("thresholds must be strictly increasing")
    rows = _group_best_ious(dataset, dets, group, score_threshold, threads)
    if not rows:
        raise UndefinedMetricError(
            f"dataset contains no parts in the {group.value!r} group"
        )
    total = len(rows)
    recalls = tuple(
        sum(1 for _, any_det, best in rows if any_det and best >= t) / total for t in ts
    )
    return RecallCurve(group=group, thresholds=ts, recalls=recalls)


_RECALL_SAMPLES_101 = tuple(i / 100.0 for i in range(101))
_RECALL_SAMPLES_11 = tuple(i / 10.0 for i in range(11))


def _interpolated_ap(flags: Sequence[bool], n_gt: int, samples: Sequence[float]) -> float:
    """Interpolated AP: at each recall sample take the maximum precision
    among ranking points whose recall is at least the sample.

    Recall is non-decreasing along the ranking, so the points at recall >= r
    form a suffix; a reversed running max of precision gives each suffix
    maximum in one pass.
    """
    if not flags:
        return 0.0
    tp_cum = np.cumsum(np.asarray(flags, dtype=np.float64))
    ranks = np.arange(1, len(flags) + 1, dtype=np.float64)
    precisions = tp_cum / ranks
    recalls = tp_cum / n_gt
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    idx = np.searchsorted(recalls, np.asarray(samples, dtype=np.float64), side="left")
    sampled = np.where(idx < len(flags), envelope[np.minimum(idx, len(flags) - 1)], 0.0)
    return float(sampled.sum() / len(samples))


def average_precision(
    dataset: Dataset,
    dets: Sequence[Detection],
    part_class: str,
    ap_iou_grid: Sequence[float],
    interpolation: str = "101",
) -> float | None:
    """Average precision of one class, averaged over an IoU grid.

    Only present-group annotations participate as ground truth. Returns
    None when the class has no present ground truth (the class is then
    excluded from the mean rather than scored 0).
    """
    if part_class not in dataset.vocabulary:
        raise ValueError(f"class {part_class!r} not in vocabulary")
    samples = {"101": _RECALL_SAMPLES_101, "11": _RECALL_SAMPLES_11}.get(interpolation)
    if samples is None:
        raise ValueError(f"interpolation must be '101' or '11', got {interpolation!r}")
    gts = [
        a
        for a in dataset.annotations
        if a.part_class == part_class and a.presence is Presence.PRESENT
    ]
    if not gts:
        return None
    class_dets = [d for d in dets if d.part_class == part_class]
    per_threshold = []
    for t in ap_iou_grid:
        flags = greedy_ap_match(class_dets, gts, t)
        per_threshold.append(_interpolated_ap(flags.tp, flags.n_gt, samples))
    return sum(per_threshold) / len(per_threshold)


def ap_report(
    dataset: Dataset,
    dets: Sequence[Detection],
    config: EvalConfig,
    interpolation: str = "101",
    threads: int | None = None,
) -> ApReport:
    """Per-class AP over the config grid plus the mean over defined classes."""

    def one_class(name: str) -> float | None:
        return average_precision(dataset, dets, name, config.ap_iou_grid, interpolation)

    values = map_ordered(one_class, list(dataset.vocabulary), threads)
    per_class = dict(zip(dataset.vocabulary, values))
    defined = [v for v in values if v is not None]
    mean_ap = sum(defined) / len(defined) if defined else None
    excluded = tuple(name for name, v in per_class.items() if v is None)
    return ApReport(
        per_class=per_class,
        mean_ap=mean_ap,
        iou_grid=tuple(config.ap_iou_grid),
        interpolation=interpolation,
        excluded=excluded,
    )


def layout_stats(dataset: Dataset) -> LayoutStats:
    """Mean/std of box center and size per class and global state ratios.

    All annotations contribute regardless of state: missing parts carry
    their expected boxes and belong in the layout estimate.
    """
    if not dataset.annotations:
        raise UndefinedMetricError("dataset has no annotations")
    per_class: dict[str, BoxStats] = {}
    for name in dataset.vocabulary:
        boxes = [a.box for a in dataset.annotations if a.part_class == name]
        if not boxes:
            continue
        centers = np.array([b.center for b in boxes], dtype=np.float64)
        sizes = np.array([[b.width, b.height] for b in boxes], dtype=np.float64)
        per_class[name] = BoxStats(
            count=len(boxes),
            mean_cx=float(centers[:, 0].mean()),
            mean_cy=float(centers[:, 1].mean()),
            mean_w=float(sizes[:, 0].mean()),
            mean_h=float(sizes[:, 1].mean()),
            std_cx=float(centers[:, 0].std()),
            std_cy=float(centers[:, 1].std()),
            std_w=float(sizes[:, 0].std()),
            std_h=float(sizes[:, 1].std()),
        )
    counts = {state.value: 0 for state in PartState}
    for ann in dataset.annotations:
        counts[ann.state.value] += 1
    n = len(dataset.annotations)
    ratios = {state: count / n for state, count in counts.items()}
    return LayoutStats(per_class=per_class, state_counts=counts, state_ratios=ratios)


# ---------------------------------------------------------------------------
# CSV emission

def write_curve_csv(curve: RecallCurve, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "recall"])
        for t, r in zip(curve.thresholds, curve.recalls):
            writer.writerow([repr(float(t)), repr(float(r))])


def write_verification_csv(report: VerificationReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["part", "r_present", "n_present", "r_missing", "n_missing"])
        for name, cv in report.per_class.items():
            writer.writerow(
                [
                    name,
                    "" if cv.present.value is None else repr(cv.present.value),
                    cv.present.total,
                    "" if cv.missing.value is None else repr(cv.missing.value),
                    cv.missing.total,
                ]
            )


def write_ap_csv(report: ApReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["part", "ap"])
        for name, value in report.per_class.items():
            writer.writerow([name, "" if value is None else repr(value)])


def write_layout_csv(stats: LayoutStats, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "part",
                "count",
                "mean_cx",
                "mean_cy",
                "mean_w",
                "mean_h",
                "std_cx",
                "std_cy",
                "std_w",
                "std_h",
            ]
        )
        for name, s in stats.per_class.items():
            writer.writerow(
                [
                    name,
                    s.count,
                    repr(s.mean_cx),
                    repr(s.mean_cy),
                    repr(s.mean_w),
                    repr(s.mean_h),
                    repr(s.std_cx),
                    repr(s.std_cy),
                    repr(s.std_w),
                    repr(s.std_h),
                ]
            )
