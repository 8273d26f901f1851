"""Context-manipulation experiments on raster images.

Three per-part experiments probe how much a detector leans on context and
absolute location. Each produces a mask plan for one (image, target part,
context size c) triple:

* hide_bg   — keep the part plus c pixels of context per side visible,
              fill everything else (no context at c = 0).
* hide_fg   — hide the part's core, inset by c per side (whole part hidden
              at c = 0, nothing hidden once 2c reaches the box size).
* location_shift — take the part-plus-context patch, move it to the
              mirror position through the image center, fill the rest.

Plans are applied to rasters with ``apply_plan`` and scored with
``evaluate_context_run``: accuracy at each c is the fraction of evaluated
parts hit at the run's IoU threshold. For location_shift the evaluation
target is the part box translated with the moved patch.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geometry import ImageExtent, expand, mirror_about_center, pixel_slices, shrink
from .matching import best_iou_for_box, group_detections
from .model import Box, Detection, PartAnnotation, ValidationError

DEFAULT_FILL = (114, 114, 114)

# Context sizes (pixels revealed per side) swept by the batch experiments.
DEFAULT_CONTEXT_GRID = (0, 5, 10, 25, 50, 100, 150, 200, 250, 300, 350)

KINDS = ("hide_bg", "hide_fg", "location_shift")


@dataclass(frozen=True)
class MaskPlan:
    """Resolved visible/hidden specification for one experiment instance.

    ``visible`` lists the regions preserved from the source raster;
    everything else is filled. For hide_fg the still-hidden core is also
    kept in ``hidden``; for location_shift ``source``/``dest`` are the moved
    patch before and after, and ``visible`` is the destination. ``eval_box``
    is the box detections are scored against (the part box, translated for
    location_shift).
    """

    kind: str
    image_id: str
    part_class: str
    c: float
    extent: ImageExtent
    visible: tuple[Box, ...]
    eval_box: Box
    fill: tuple[int, int, int] = DEFAULT_FILL
    hidden: Box | None = None
    source: Box | None = None
    dest: Box | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.c < 0:
            raise ValueError(f"context size must be non-negative, got {self.c}")
        w, h = float(self.extent.width), float(self.extent.height)
        for box in self.visible:
            if box.x_min < 0 or box.y_min < 0 or box.x_max > w or box.y_max > h:
                raise ValueError(f"visible region {box.as_list()} outside extent")
        if self.kind == "location_shift":
            if self.source is None or self.dest is None:
                raise ValueError("location_shift plan needs source and dest boxes")
            if not (
                math.isclose(self.source.width, self.dest.width)
                and math.isclose(self.source.height, self.dest.height)
            ):
                raise ValueError("destination box must have the source box size")


def plan_hide_bg(
    gt: PartAnnotation,
    c: float,
    extent: ImageExtent,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> MaskPlan:
    """Visible region = part box grown by c per side; all else filled."""
    visible = expand(gt.box, c, extent)
    return MaskPlan(
        kind="hide_bg",
        image_id=gt.image_id,
        part_class=gt.part_class,
        c=float(c),
        extent=extent,
        visible=(visible,),
        eval_box=gt.box,
        fill=fill,
    )


def plan_hide_fg(
    gt: PartAnnotation,
    c: float,
    extent: ImageExtent,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> MaskPlan:
    """Hide the part core inset by c per side; context stays visible."""
    core = shrink(gt.box, c)
    full = Box(0.0, 0.0, float(extent.width), float(extent.height))
    if core is None:
        visible: tuple[Box, ...] = (full,)
    else:
        candidates = (
            Box(0.0, 0.0, full.x_max, core.y_min),
            Box(0.0, core.y_max, full.x_max, full.y_max),
            Box(0.0, core.y_min, core.x_min, core.y_max),
            Box(core.x_max, core.y_min, full.x_max, core.y_max),
        )
        visible = tuple(b for b in candidates if b.area > 0)
    return MaskPlan(
        kind="hide_fg",
        image_id=gt.image_id,
        part_class=gt.part_class,
        c=float(c),
        extent=extent,
        visible=visible,
        eval_box=gt.box,
        fill=fill,
        hidden=core,
    )


def plan_location_shift(
    gt: PartAnnotation,
    c: float,
    extent: ImageExtent,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> MaskPlan:
    """Move the part-plus-context patch to its mirror position.

    The evaluation box is the part box translated with the patch: larger
    context means a larger patch whose mirrored position is closer to the
    original, so the effective displacement shrinks as c grows.
    """
    source = expand(gt.box, c, extent)
    dest = mirror_about_center(source, extent)
    dx = dest.x_min - source.x_min
    dy = dest.y_min - source.y_min
    eval_box = Box(
        gt.box.x_min + dx, gt.box.y_min + dy, gt.box.x_max + dx, gt.box.y_max + dy
    )
    return MaskPlan(
        kind="location_shift",
        image_id=gt.image_id,
        part_class=gt.part_class,
        c=float(c),
        extent=extent,
        visible=(dest,),
        eval_box=eval_box,
        fill=fill,
        source=source,
        dest=dest,
    )


def apply_plan(image: np.ndarray, plan: MaskPlan) -> np.ndarray:
    """Apply a mask plan to an RGB raster.

    Hidden pixels become the fill color; visible pixels are copied
    unchanged. For location_shift the destination pixels are taken from the
    source patch of the input image.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an RGB (H, W, 3) raster, got shape {image.shape}")
    h, w = image.shape[:2]
    if (w, h) != (plan.extent.width, plan.extent.height):
        raise ValueError(
            f"raster is {w}x{h} but plan expects {plan.extent.width}x{plan.extent.height}"
        )
    out = np.empty_like(image)
    out[:, :] = np.asarray(plan.fill, dtype=image.dtype)
    if plan.kind == "location_shift":
        src_rows, src_cols = pixel_slices(plan.source, plan.extent)
        n_rows = src_rows.stop - src_rows.start
        n_cols = src_cols.stop - src_cols.start
        # Anchor the destination at its rounded origin but keep the source's
        # pixel size exactly, clamped inside the raster.
        y0 = min(max(int(math.floor(plan.dest.y_min + 0.5)), 0), h - n_rows)
        x0 = min(max(int(math.floor(plan.dest.x_min + 0.5)), 0), w - n_cols)
        out[y0 : y0 + n_rows, x0 : x0 + n_cols] = image[src_rows, src_cols]
    else:
        for box in plan.visible:
            rows, cols = pixel_slices(box, plan.extent)
            out[rows, cols] = image[rows, cols]
    return out


@dataclass(frozen=True)
class ContextPoint:
    c: float
    accuracy: float
    n_parts: int


@dataclass(frozen=True)
class ContextRunReport:
    """Accuracy as a function of context size for one experiment."""

    kind: str
    iou_threshold: float
    points: tuple[ContextPoint, ...]

    def __post_init__(self) -> None:
        cs = [p.c for p in self.points]
        if any(a >= b for a, b in zip(cs, cs[1:])):
            raise ValueError("context sizes must be strictly increasing")
        if any(not 0.0 <= p.accuracy <= 1.0 for p in self.points):
            raise ValueError("accuracies must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "experiment": self.kind,
            "iou_threshold": self.iou_threshold,
            "points": [
                {"c": p.c, "accuracy": p.accuracy, "n_parts": p.n_parts}
                for p in self.points
            ],
        }


def evaluate_context_run(
    plans: Sequence[MaskPlan],
    dets_by_c: Mapping[float, Sequence[Detection]],
    iou_threshold: float = 0.25,
    score_threshold: float = 0.0,
) -> ContextRunReport:
    """Score one experiment: per context size, the fraction of planned parts
    whose evaluation box is hit at the IoU threshold."""
    if not plans:
        raise ValueError("no plans to evaluate")
    kinds = {p.kind for p in plans}
    if len(kinds) != 1:
        raise ValueError(f"plans mix experiment kinds: {sorted(kinds)}")
    by_c: dict[float, list[MaskPlan]] = {}
    for plan in plans:
        by_c.setdefault(plan.c, []).append(plan)
    points = []
    for c in sorted(by_c):
        if c not in dets_by_c:
            raise ValueError(f"no detections supplied for context size {c}")
        index = group_detections(dets_by_c[c])
        hits = 0
        group = by_c[c]
        for plan in group:
            candidates = index.get((plan.image_id, plan.part_class), ())
            any_det, best = best_iou_for_box(plan.eval_box, candidates, score_threshold)
            if any_det and best >= iou_threshold:
                hits += 1
        points.append(ContextPoint(c=c, accuracy=hits / len(group), n_parts=len(group)))
    return ContextRunReport(
        kind=kinds.pop(), iou_threshold=iou_threshold, points=tuple(points)
    )


# ---------------------------------------------------------------------------
# Manifest round trip

def c_label(c: float) -> str:
    """Directory-name-safe label for a context size (c0, c5, ...)."""
    c = float(c)
    return f"c{int(c)}" if c.is_integer() else f"c{c}"


def _box_to_list(box: Box | None) -> list[float] | None:
    return None if box is None else box.as_list()


def _box_from_list(raw) -> Box | None:
    return None if raw is None else Box(*[float(v) for v in raw])


def plan_to_dict(plan: MaskPlan) -> dict:
    return {
        "kind": plan.kind,
        "image_id": plan.image_id,
        "part": plan.part_class,
        "c": plan.c,
        "extent": [plan.extent.width, plan.extent.height],
        "visible": [b.as_list() for b in plan.visible],
        "eval_bbox": plan.eval_box.as_list(),
        "fill": list(plan.fill),
        "hidden": _box_to_list(plan.hidden),
        "source": _box_to_list(plan.source),
        "dest": _box_to_list(plan.dest),
    }


def plan_from_dict(doc: dict) -> MaskPlan:
    return MaskPlan(
        kind=doc["kind"],
        image_id=doc["image_id"],
        part_class=doc["part"],
        c=float(doc["c"]),
        extent=ImageExtent(int(doc["extent"][0]), int(doc["extent"][1])),
        visible=tuple(_box_from_list(b) for b in doc["visible"]),
        eval_box=_box_from_list(doc["eval_bbox"]),
        fill=tuple(int(v) for v in doc["fill"]),
        hidden=_box_from_list(doc.get("hidden")),
        source=_box_from_list(doc.get("source")),
        dest=_box_from_list(doc.get("dest")),
    )


def write_manifest(
    plans: Sequence[MaskPlan],
    path: str | Path,
    config: dict | None = None,
) -> None:
    """Serialize an experiment's plans plus its effective configuration."""
    kinds = {p.kind for p in plans}
    doc = {
        "experiment": kinds.pop() if len(kinds) == 1 else sorted(kinds),
        "config": config or {},
        "entries": [plan_to_dict(p) for p in plans],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path: str | Path) -> tuple[list[MaskPlan], dict]:
    """Read back a manifest: (plans, config)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON document: {exc}") from exc
    try:
        plans = [plan_from_dict(rec) for rec in doc["entries"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: invalid manifest: {exc}") from exc
    return plans, doc.get("config", {})


def write_context_csv(report: ContextRunReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["c", "accuracy"])
        for p in report.points:
            writer.writerow([repr(p.c), repr(p.accuracy)])
