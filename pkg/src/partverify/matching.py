"""Detection-to-ground-truth association.

Two rules live here: per-part best-IoU hit testing (any detection of the
same image and class may claim a part, valid because each class occurs at
most once per image) and greedy score-ordered matching for average
precision, where each ground truth may be claimed at most once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .geometry import iou
from .model import Box, Detection, PartAnnotation


@dataclass(frozen=True)
class MatchResult:
    """Outcome of hit-testing one ground-truth part."""

    detected: bool
    best_iou: float
    matched_detection_index: int | None = None


@dataclass(frozen=True)
class ApFlags:
    """TP/FP labels in descending-score order plus the ground-truth count."""

    tp: tuple[bool, ...]
    n_gt: int

    def __post_init__(self) -> None:
        if sum(self.tp) > self.n_gt:
            raise ValueError("more true positives than ground truths")


def hit_test(
    gt: PartAnnotation,
    dets: Sequence[Detection],
    t: float,
    score_threshold: float = 0.0,
) -> MatchResult:
    """Best-IoU hit test of one part against its candidate detections.

    Detections below ``score_threshold`` are dropped. The part counts as
    detected iff at least one detection survives and the maximum IoU against
    the part's box reaches ``t``. Ties on IoU break toward the higher score,
    then the lower input index.
    """
    best_key: tuple[float, float, int] | None = None
    best_index: int | None = None
    for i, det in enumerate(dets):
        if det.score < score_threshold:
            continue
        key = (iou(det.box, gt.box), det.score, -i)
        if best_key is None or key > best_key:
            best_key = key
            best_index = i
    if best_key is None:
        return MatchResult(detected=False, best_iou=0.0)
    best_iou = best_key[0]
    if best_iou >= t:
        return MatchResult(detected=True, best_iou=best_iou, matched_detection_index=best_index)
    return MatchResult(detected=False, best_iou=best_iou)


def _det_sort_key(det: Detection) -> tuple:
    # Total order up to full duplicates, so results are permutation invariant.
    return (-det.score, det.image_id, det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max)


def greedy_ap_match(
    dets: Sequence[Detection],
    gts: Sequence[PartAnnotation],
    t: float,
) -> ApFlags:
    """Greedy score-ordered matching of one class's detections to its GTs.

    Detections are visited by descending score (ties: ascending image id,
    then box lexicographic); each claims the unmatched same-image ground
    truth with the highest IoU, provided it reaches ``t``. Claimed -> TP,
    otherwise FP.
    """
    order = sorted(range(len(dets)), key=lambda i: _det_sort_key(dets[i]))
    gts_by_image: dict[str, list[int]] = {}
    for j, gt in enumerate(gts):
        gts_by_image.setdefault(gt.image_id, []).append(j)
    claimed = [False] * len(gts)
    flags: list[bool] = []
    for i in order:
        det = dets[i]
        best_iou = -1.0  # zero-IoU candidates still qualify when t == 0
        best_j: int | None = None
        for j in gts_by_image.get(det.image_id, ()):
            if claimed[j]:
                continue
            v = iou(det.box, gts[j].box)
            if v > best_iou:
                best_iou = v
                best_j = j
        if best_j is not None and best_iou >= t:
            claimed[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return ApFlags(tp=tuple(flags), n_gt=len(gts))


def group_detections(dets: Sequence[Detection]) -> dict[tuple[str, str], list[Detection]]:
    """Index detections by (image_id, part_class), preserving input order."""
    index: dict[tuple[str, str], list[Detection]] = {}
    for det in dets:
        index.setdefault((det.image_id, det.part_class), []).append(det)
    return index


def best_iou_for_box(
    box: Box,
    dets: Sequence[Detection],
    score_threshold: float = 0.0,
) -> tuple[bool, float]:
    """(any detection survives, max IoU against ``box``) for threshold sweeps."""
    best = 0.0
    any_det = False
    for det in dets:
        if det.score < score_threshold:
            continue
        any_det = True
        v = iou(det.box, box)
        if v > best:
            best = v
    return any_det, best
