"""Domain types and annotation/detection file ingestion.

A part annotation carries a bounding box and a presence-state label; the
state taxonomy groups into two presence classes (present/missing) which the
recall metrics are defined over. File formats are plain JSON documents, see
``load_dataset`` / ``load_detections``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable


class ValidationError(ValueError):
    """Raised when an input document fails schema or invariant validation."""


class PartState(Enum):
    """Ground-truth condition of one part."""

    INTACT = "intact"
    DAMAGED = "damaged"
    ABSENT = "absent"
    OCCLUDED = "occluded"


class Presence(Enum):
    """Presence group a part state maps to."""

    PRESENT = "present"
    MISSING = "missing"


_STATE_TO_PRESENCE = {
    PartState.INTACT: Presence.PRESENT,
    PartState.DAMAGED: Presence.PRESENT,
    PartState.ABSENT: Presence.MISSING,
    PartState.OCCLUDED: Presence.MISSING,
}


def group_state(state: PartState) -> Presence:
    """Map a part state to its presence group.

    intact/damaged -> present, absent/occluded -> missing.
    """
    return _STATE_TO_PRESENCE[state]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixel coordinates, origin top-left."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"box min must not exceed max, got {coords}")

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "Box":
        return cls(x, y, x + w, y + h)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class PartAnnotation:
    """One ground-truth part instance. Missing parts still carry a box."""

    image_id: str
    part_class: str
    box: Box
    state: PartState

    @property
    def presence(self) -> Presence:
        return group_state(self.state)


@dataclass(frozen=True)
class Detection:
    """One detector output."""

    image_id: str
    part_class: str
    box: Box
    score: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ImageInfo:
    """Image record: identifier, extent and optional file name."""

    image_id: str
    width: int
    height: int
    file_name: str | None = None

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image extent must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class Dataset:
    """Validated collection of images, class vocabulary and annotations.

    Invariants enforced on construction: unique image ids, unique vocabulary
    entries, every annotation references a known image and class, at most one
    annotation per (image, class) pair, and every box lies within its image.
    """

    images: tuple[ImageInfo, ...]
    vocabulary: tuple[str, ...]
    annotations: tuple[PartAnnotation, ...]

    def __post_init__(self) -> None:
        ids = [im.image_id for im in self.images]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate image ids in dataset")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValidationError("duplicate entries in vocabulary")
        by_id = {im.image_id: im for im in self.images}
        vocab = set(self.vocabulary)
        seen: set[tuple[str, str]] = set()
        for i, ann in enumerate(self.annotations):
            where = f"annotation #{i} (image {ann.image_id!r}, part {ann.part_class!r})"
            if ann.image_id not in by_id:
                raise ValidationError(f"{where}: unknown image id")
            if ann.part_class not in vocab:
                raise ValidationError(f"{where}: class not in vocabulary")
            key = (ann.image_id, ann.part_class)
            if key in seen:
                raise ValidationError(f"{where}: duplicate (image, class) pair")
            seen.add(key)
            im = by_id[ann.image_id]
            b = ann.box
            if b.x_min < 0 or b.y_min < 0 or b.x_max > im.width or b.y_max > im.height:
                raise ValidationError(f"{where}: box {b.as_list()} outside image bounds")

    @property
    def images_by_id(self) -> dict[str, ImageInfo]:
        return {im.image_id: im for im in self.images}

    def annotations_in_group(self, group: Presence) -> list[PartAnnotation]:
        return [a for a in self.annotations if a.presence is group]


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation thresholds and weights.

    t_present / t_missing are the IoU thresholds for present and missing
    recall; beta weights missed hallucinations against missed present parts
    in the verification score; score_threshold drops low-confidence
    detections before hit testing; ap_iou_grid is the threshold grid the
    per-class average precision is averaged over.
    """

    t_present: float = 0.5
    t_missing: float = 0.1
    beta: float = 0.1
    score_threshold: float = 0.0
    ap_iou_grid: tuple[float, ...] = field(
        default_factory=lambda: tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
    )

    def __post_init__(self) -> None:
        for name in ("t_present", "t_missing", "score_threshold"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not (math.isfinite(self.beta) and self.beta >= 0.0):
            raise ValueError(f"beta must be finite and non-negative, got {self.beta}")
        grid = tuple(self.ap_iou_grid)
        if any(not (0.0 <= t <= 1.0) for t in grid):
            raise ValueError("ap_iou_grid values must be in [0, 1]")
        if any(a >= b for a, b in zip(grid, grid[1:])):
            raise ValueError("ap_iou_grid must be strictly increasing")
        object.__setattr__(self, "ap_iou_grid", grid)

    def to_dict(self) -> dict:
        return {
            "t_present": self.t_present,
            "t_missing": self.t_missing,
            "beta": self.beta,
            "score_threshold": self.score_threshold,
            "ap_iou_grid": list(self.ap_iou_grid),
        }


# ---------------------------------------------------------------------------
# File ingestion

_IMAGE_KEYS = {"id", "width", "height", "file_name"}
_ANN_KEYS = {"image_id", "part", "bbox", "state"}
_DET_KEYS = {"image_id", "part", "bbox", "score"}


def _warn_unknown_keys(section: str, unknown: set[str]) -> None:
    if unknown:
        warnings.warn(
            f"ignoring unknown {section} key(s): {sorted(unknown)}", stacklevel=3
        )


def _parse_bbox(raw, where: str, bbox_format: str) -> Box:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 4):
        raise ValidationError(f"{where}: bbox must be a list of 4 numbers, got {raw!r}")
    try:
        vals = [float(v) for v in raw]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: bbox must be numeric, got {raw!r}") from exc
    try:
        if bbox_format == "xywh":
            return Box.from_xywh(*vals)
        return Box(*vals)
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _load_json(path: str | Path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON document: {exc}") from exc


def load_dataset(path: str | Path, bbox_format: str = "xyxy") -> Dataset:
    """Load and validate an annotation file.

    The document has top-level keys ``images`` (list of {id, width, height,
    file_name?}), ``parts`` (ordered class-name list) and ``annotations``
    (list of {image_id, part, bbox, state}). ``bbox_format`` is "xyxy"
    (default, [x_min, y_min, x_max, y_max]) or "xywh" ([x, y, width,
    height], converted on ingest). Boxes are clipped to image bounds; a box
    left with zero width or height is rejected. Unknown keys are ignored
    with a warning.

    Raises ValidationError naming the first offending record.
    """
    if bbox_format not in ("xyxy", "xywh"):
        raise ValueError(f"bbox_format must be 'xyxy' or 'xywh', got {bbox_format!r}")
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: annotation document must be a JSON object")
    _warn_unknown_keys("top-level", set(doc) - {"images", "parts", "annotations"})
    for key in ("images", "parts", "annotations"):
        if key not in doc:
            raise ValidationError(f"{path}: missing required key {key!r}")

    images: list[ImageInfo] = []
    unknown_img_keys: set[str] = set()
    for i, rec in enumerate(doc["images"]):
        if not isinstance(rec, dict):
            raise ValidationError(f"image #{i}: record must be an object")
        unknown_img_keys |= set(rec) - _IMAGE_KEYS
        try:
            images.append(
                ImageInfo(
                    image_id=str(rec["id"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    file_name=rec.get("file_name"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"image #{i}: {exc}") from exc
    _warn_unknown_keys("image", unknown_img_keys)

    vocabulary = tuple(str(p) for p in doc["parts"])
    by_id = {im.image_id: im for im in images}

    annotations: list[PartAnnotation] = []
    unknown_ann_keys: set[str] = set()
    for i, rec in enumerate(doc["annotations"]):
        if not isinstance(rec, dict):
            raise ValidationError(f"annotation #{i}: record must be an object")
        unknown_ann_keys |= set(rec) - _ANN_KEYS
        missing = {"image_id", "part", "bbox", "state"} - set(rec)
        if missing:
            raise ValidationError(f"annotation #{i}: missing key(s) {sorted(missing)}")
        image_id = str(rec["image_id"])
        part = str(rec["part"])
        where = f"annotation #{i} (image {image_id!r}, part {part!r})"
        try:
            state = PartState(rec["state"])
        except ValueError as exc:
            raise ValidationError(
                f"{where}: state {rec['state']!r} is not one of "
                f"{[s.value for s in PartState]}"
            ) from exc
        box = _parse_bbox(rec["bbox"], where, bbox_format)
        im = by_id.get(image_id)
        if im is None:
            raise ValidationError(f"{where}: unknown image id")
        box = _clip_box(box, im.width, im.height, where)
        annotations.append(PartAnnotation(image_id, part, box, state))
    _warn_unknown_keys("annotation", unknown_ann_keys)

    return Dataset(tuple(images), vocabulary, tuple(annotations))


def _clip_box(box: Box, width: int, height: int, where: str) -> Box:
    clipped = Box(
        min(max(box.x_min, 0.0), float(width)),
        min(max(box.y_min, 0.0), float(height)),
        min(max(box.x_max, 0.0), float(width)),
        min(max(box.y_max, 0.0), float(height)),
    )
    if clipped.width <= 0 or clipped.height <= 0:
        raise ValidationError(f"{where}: box {box.as_list()} lies outside image bounds")
    return clipped


def load_detections(path: str | Path, dataset: Dataset) -> list[Detection]:
    """Load a detection file ([{image_id, part, bbox, score}]) and validate
    it against ``dataset``. Order is preserved as read."""
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise ValidationError(f"{path}: detection document must be a JSON list")
    known_images = {im.image_id for im in dataset.images}
    vocab = set(dataset.vocabulary)
    detections: list[Detection] = []
    unknown_keys: set[str] = set()
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict):
            raise ValidationError(f"detection #{i}: record must be an object")
        unknown_keys |= set(rec) - _DET_KEYS
        missing = {"image_id", "part", "bbox", "score"} - set(rec)
        if missing:
            raise ValidationError(f"detection #{i}: missing key(s) {sorted(missing)}")
        image_id = str(rec["image_id"])
        part = str(rec["part"])
        where = f"detection #{i} (image {image_id!r}, part {part!r})"
        if image_id not in known_images:
            raise ValidationError(f"{where}: unknown image id")
        if part not in vocab:
            raise ValidationError(f"{where}: class not in vocabulary")
        box = _parse_bbox(rec["bbox"], where, "xyxy")
        try:
            score = float(rec["score"])
            det = Detection(image_id, part, box, score)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        detections.append(det)
    _warn_unknown_keys("detection", unknown_keys)
    return detections


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset in the canonical annotation schema (xyxy boxes)."""
    doc = {
        "images": [
            {
                "id": im.image_id,
                "width": im.width,
                "height": im.height,
                **({"file_name": im.file_name} if im.file_name is not None else {}),
            }
            for im in dataset.images
        ],
        "parts": list(dataset.vocabulary),
        "annotations": [
            {
                "image_id": a.image_id,
                "part": a.part_class,
                "bbox": a.box.as_list(),
                "state": a.state.value,
            }
            for a in dataset.annotations
        ],
    }
    _write_json(doc, path)


def save_detections(detections: Iterable[Detection], path: str | Path) -> None:
    """Write detections in the canonical detection schema."""
    doc = [
        {
            "image_id": d.image_id,
            "part": d.part_class,
            "bbox": d.box.as_list(),
            "score": d.score,
        }
        for d in detections
    ]
    _write_json(doc, path)


def _write_json(doc, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
