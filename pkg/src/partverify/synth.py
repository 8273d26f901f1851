"""Synthetic part-verification datasets and reference detectors.

The generator samples one instance of every vocabulary class per image from
a hand-authored layout prior (mean position/size plus Gaussian noise in
fractions of the image), assigns each part a state from a probability
vector, and can render the scene as flat colored rectangles. Three
reference detectors exercise the metrics without any learning: an oracle
(perfect boxes on present parts only), a prior detector that fires at every
class's dataset-wide mean location in every image (a pure hallucinator on
missing parts), and a noisy oracle with box jitter and dropped parts.

All randomness is PCG64 seeded through ``numpy.random.SeedSequence([seed,
stream, image_index])``, so per-image work is reproducible and order
independent.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .geometry import ImageExtent, clip, pixel_slices
from .metrics import layout_stats
from .model import (
    Box,
    Dataset,
    Detection,
    ImageInfo,
    PartAnnotation,
    PartState,
    Presence,
    ValidationError,
)

STATE_ORDER = (PartState.INTACT, PartState.DAMAGED, PartState.ABSENT, PartState.OCCLUDED)

# Default state mix: mostly intact, roughly a fifth absent.
DEFAULT_STATE_PROBS = (0.605, 0.06, 0.195, 0.14)

BACKGROUND_COLOR = (225, 225, 225)

_STREAM_LAYOUT = 0
_STREAM_ORACLE = 1
_STREAM_PRIOR = 2
_STREAM_NOISY = 3


def substream(seed: int, stream: int, index: int) -> np.random.Generator:
    """Deterministic per-item PCG64 substream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, index])))


def _check_probs(probs: Sequence[float], where: str) -> tuple[float, ...]:
    probs = tuple(float(p) for p in probs)
    if len(probs) != len(STATE_ORDER):
        raise ValidationError(f"{where}: need {len(STATE_ORDER)} state probabilities")
    if any(p < 0 or not math.isfinite(p) for p in probs):
        raise ValidationError(f"{where}: state probabilities must be non-negative")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise ValidationError(f"{where}: state probabilities must sum to 1, got {sum(probs)}")
    return probs


@dataclass(frozen=True)
class PartLayout:
    """Layout prior of one class, in fractions of the image size."""

    cx: float
    cy: float
    w: float
    h: float
    pos_std: float = 0.025
    size_std: float = 0.012
    state_probs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValidationError(f"layout fraction {name}={v} must be in (0, 1]")
        if self.pos_std < 0 or self.size_std < 0:
            raise ValidationError("layout std fractions must be non-negative")
        if self.state_probs is not None:
            object.__setattr__(self, "state_probs", _check_probs(self.state_probs, "part"))


@dataclass(frozen=True)
class LayoutSpec:
    """Image extent, per-class layout priors and the state distribution."""

    width: int
    height: int
    parts: dict[str, PartLayout]
    state_probs: tuple[float, ...] = DEFAULT_STATE_PROBS

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValidationError("layout extent must be positive")
        if not self.parts:
            raise ValidationError("layout needs at least one part class")
        object.__setattr__(self, "state_probs", _check_probs(self.state_probs, "layout"))

    @property
    def extent(self) -> ImageExtent:
        return ImageExtent(self.width, self.height)

    def probs_for(self, part_class: str) -> tuple[float, ...]:
        override = self.parts[part_class].state_probs
        return override if override is not None else self.state_probs


@dataclass(frozen=True)
class DetectorParams:
    """Configuration of one reference detector run."""

    kind: str
    seed: int
    drop_prob: float = 0.0
    jitter_std: float = 0.0
    score_low: float = 0.8
    score_high: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("oracle", "prior", "noisy"):
            raise ValueError(f"unknown detector kind {self.kind!r}")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError(f"drop_prob must be in [0, 1], got {self.drop_prob}")
        if self.jitter_std < 0:
            raise ValueError(f"jitter_std must be non-negative, got {self.jitter_std}")
        if not 0.0 <= self.score_low <= self.score_high <= 1.0:
            raise ValueError("score bounds must satisfy 0 <= low <= high <= 1")

    @classmethod
    def for_kind(cls, kind: str, seed: int, drop_prob: float | None = None,
                 jitter_std: float | None = None) -> "DetectorParams":
        if kind == "prior":
            return cls(kind=kind, seed=seed, score_low=0.5, score_high=1.0)
        if kind == "noisy":
            return cls(
                kind=kind,
                seed=seed,
                drop_prob=0.1 if drop_prob is None else drop_prob,
                jitter_std=3.0 if jitter_std is None else jitter_std,
            )
        return cls(kind=kind, seed=seed)


def default_layout() -> LayoutSpec:
    """Hand-authored 22-part bicycle-like arrangement.

    Illustrative only: positions and sizes sketch a plausible side-view
    bike so that the layout prior is visually recognizable, they are not
    measurements of any real dataset.
    """
    parts = {
        "saddle": PartLayout(0.38, 0.30, 0.10, 0.06),
        "steer": PartLayout(0.74, 0.22, 0.12, 0.10),
        "front wheel": PartLayout(0.78, 0.66, 0.26, 0.34),
        "back wheel": PartLayout(0.26, 0.66, 0.26, 0.34),
        "front pedal": PartLayout(0.52, 0.62, 0.06, 0.05),
        "back pedal": PartLayout(0.46, 0.70, 0.06, 0.05),
        "chain": PartLayout(0.37, 0.66, 0.16, 0.07),
        "gear case": PartLayout(0.40, 0.60, 0.14, 0.08),
        "dress guard": PartLayout(0.27, 0.56, 0.16, 0.16),
        "dynamo": PartLayout(0.70, 0.55, 0.04, 0.06),
        "bell": PartLayout(0.68, 0.20, 0.04, 0.04),
        "front light": PartLayout(0.80, 0.36, 0.05, 0.05),
        "back light": PartLayout(0.16, 0.46, 0.04, 0.04),
        "front brake": PartLayout(0.76, 0.42, 0.05, 0.06),
        "back brake": PartLayout(0.34, 0.40, 0.05, 0.05),
        "front mudguard": PartLayout(0.78, 0.50, 0.20, 0.12),
        "back mudguard": PartLayout(0.22, 0.50, 0.20, 0.12),
        "front reflector": PartLayout(0.78, 0.60, 0.03, 0.03),
        "back reflector": PartLayout(0.18, 0.60, 0.03, 0.03),
        "kickstand": PartLayout(0.42, 0.78, 0.06, 0.12),
        "lock": PartLayout(0.33, 0.48, 0.07, 0.06),
        "pump": PartLayout(0.45, 0.45, 0.03, 0.12),
    }
    return LayoutSpec(width=640, height=480, parts=parts)


def load_layout_spec(path: str | Path) -> LayoutSpec:
    """Load a layout spec JSON document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON document: {exc}") from exc
    try:
        parts = {
            str(name): PartLayout(
                cx=float(rec["cx"]),
                cy=float(rec["cy"]),
                w=float(rec["w"]),
                h=float(rec["h"]),
                pos_std=float(rec.get("pos_std", 0.025)),
                size_std=float(rec.get("size_std", 0.012)),
                state_probs=_probs_from(rec.get("state_probs")),
            )
            for name, rec in doc["parts"].items()
        }
        return LayoutSpec(
            width=int(doc["width"]),
            height=int(doc["height"]),
            parts=parts,
            state_probs=_probs_from(doc.get("state_probs")) or DEFAULT_STATE_PROBS,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: invalid layout spec: {exc}") from exc


def _probs_from(raw) -> tuple[float, ...] | None:
    if raw is None:
        return None
    if isinstance(raw, dict):
        return tuple(float(raw[s.value]) for s in STATE_ORDER)
    return tuple(float(v) for v in raw)


def save_layout_spec(spec: LayoutSpec, path: str | Path) -> None:
    doc = {
        "width": spec.width,
        "height": spec.height,
        "state_probs": {s.value: p for s, p in zip(STATE_ORDER, spec.state_probs)},
        "parts": {
            name: {
                "cx": pl.cx,
                "cy": pl.cy,
                "w": pl.w,
                "h": pl.h,
                "pos_std": pl.pos_std,
                "size_std": pl.size_std,
                **(
                    {"state_probs": {s.value: p for s, p in zip(STATE_ORDER, pl.state_probs)}}
                    if pl.state_probs is not None
                    else {}
                ),
            }
            for name, pl in spec.parts.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sample_state(rng: np.random.Generator, probs: Sequence[float]) -> PartState:
    u = rng.random()
    acc = 0.0
    for state, p in zip(STATE_ORDER, probs):
        acc += p
        if u < acc:
            return state
    return STATE_ORDER[-1]


def _sample_box(rng: np.random.Generator, pl: PartLayout, width: int, height: int) -> Box:
    cx = (pl.cx + pl.pos_std * rng.standard_normal()) * width
    cy = (pl.cy + pl.pos_std * rng.standard_normal()) * height
    w = (pl.w + pl.size_std * rng.standard_normal()) * width
    h = (pl.h + pl.size_std * rng.standard_normal()) * height
    w = min(max(w, 2.0), float(width))
    h = min(max(h, 2.0), float(height))
    x_min = min(max(cx - w / 2.0, 0.0), width - 1.0)
    y_min = min(max(cy - h / 2.0, 0.0), height - 1.0)
    x_max = min(x_min + w, float(width))
    y_max = min(y_min + h, float(height))
    return Box(float(x_min), float(y_min), float(x_max), float(y_max))


def image_id_for(index: int) -> str:
    return f"img{index:05d}"


def generate_dataset(spec: LayoutSpec, n_images: int, seed: int) -> Dataset:
    """Sample a dataset of ``n_images`` from the layout prior.

    Every image receives exactly one annotation per vocabulary class;
    missing parts carry their sampled (expected) boxes like any other.
    Pure function of (spec, n_images, seed).
    """
    if n_images < 1:
        raise ValueError(f"n_images must be >= 1, got {n_images}")
    images = []
    annotations = []
    vocabulary = tuple(spec.parts)
    for i in range(n_images):
        image_id = image_id_for(i)
        images.append(
            ImageInfo(image_id, spec.width, spec.height, file_name=f"{image_id}.png")
        )
        rng = substream(seed, _STREAM_LAYOUT, i)
        for name in vocabulary:
            pl = spec.parts[name]
            box = _sample_box(rng, pl, spec.width, spec.height)
            state = _sample_state(rng, spec.probs_for(name))
            annotations.append(PartAnnotation(image_id, name, box, state))
    return Dataset(tuple(images), vocabulary, tuple(annotations))


# ---------------------------------------------------------------------------
# Rendering

def class_color(index: int, n_classes: int) -> tuple[int, int, int]:
    """Distinct saturated color for class ``index`` on an HSV wheel."""
    hue = index / max(n_classes, 1)
    r, g, b = colorsys.hsv_to_rgb(hue, 0.78, 0.92)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def render_image(
    extent: ImageExtent,
    annotations: Sequence[PartAnnotation],
    vocabulary: Sequence[str],
) -> np.ndarray:
    """Schematic raster: flat background, one filled rectangle per part.

    Parts draw in vocabulary order (later classes overwrite overlaps).
    Absent parts are not drawn; occluded parts are drawn and then their top
    half is covered with background color.
    """
    img = np.empty((extent.height, extent.width, 3), dtype=np.uint8)
    img[:, :] = BACKGROUND_COLOR
    order = {name: i for i, name in enumerate(vocabulary)}
    for ann in sorted(annotations, key=lambda a: order[a.part_class]):
        if ann.state is PartState.ABSENT:
            continue
        rows, cols = pixel_slices(ann.box, extent)
        img[rows, cols] = class_color(order[ann.part_class], len(vocabulary))
        if ann.state is PartState.OCCLUDED:
            cover = Box(ann.box.x_min, ann.box.y_min, ann.box.x_max,
                        (ann.box.y_min + ann.box.y_max) / 2.0)
            rows, cols = pixel_slices(cover, extent)
            img[rows, cols] = BACKGROUND_COLOR
    return img


def write_renders(dataset: Dataset, out_dir: str | Path) -> list[Path]:
    """Render every image of the dataset to ``out_dir`` as PNG."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_image: dict[str, list[PartAnnotation]] = {}
    for ann in dataset.annotations:
        by_image.setdefault(ann.image_id, []).append(ann)
    paths = []
    for im in dataset.images:
        extent = ImageExtent(im.width, im.height)
        raster = render_image(extent, by_image.get(im.image_id, []), dataset.vocabulary)
        path = out_dir / (im.file_name or f"{im.image_id}.png")
        Image.fromarray(raster).save(path, format="PNG")
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Reference detectors

def _uniform_score(rng: np.random.Generator, params: DetectorParams) -> float:
    return float(params.score_low + (params.score_high - params.score_low) * rng.random())


def _annotations_by_image(dataset: Dataset) -> dict[str, list[PartAnnotation]]:
    by_image: dict[str, list[PartAnnotation]] = {}
    for ann in dataset.annotations:
        by_image.setdefault(ann.image_id, []).append(ann)
    return by_image


def run_oracle(dataset: Dataset, params: DetectorParams) -> list[Detection]:
    """One perfect-box detection per present part, none for missing parts."""
    by_image = _annotations_by_image(dataset)
    detections = []
    for i, im in enumerate(dataset.images):
        rng = substream(params.seed, _STREAM_ORACLE, i)
        for ann in by_image.get(im.image_id, []):
            if ann.presence is Presence.PRESENT:
                detections.append(
                    Detection(ann.image_id, ann.part_class, ann.box, _uniform_score(rng, params))
                )
    return detections


def run_prior(dataset: Dataset, params: DetectorParams) -> list[Detection]:
    """Fire at every class's dataset-wide mean box in every image.

    Models a detector that has memorized where parts usually are: it hits
    every missing part at IoU-threshold zero by construction.
    """
    if len(dataset.images) < 2:
        raise ValueError("prior detector needs at least 2 images to estimate a layout")
    stats = layout_stats(dataset)
    mean_boxes = {}
    for name, s in stats.per_class.items():
        mean_boxes[name] = Box(
            s.mean_cx - s.mean_w / 2.0,
            s.mean_cy - s.mean_h / 2.0,
            s.mean_cx + s.mean_w / 2.0,
            s.mean_cy + s.mean_h / 2.0,
        )
    detections = []
    for i, im in enumerate(dataset.images):
        rng = substream(params.seed, _STREAM_PRIOR, i)
        extent = ImageExtent(im.width, im.height)
        for name in dataset.vocabulary:
            box = mean_boxes.get(name)
            if box is None:
                continue
            detections.append(
                Detection(im.image_id, name, clip(box, extent), _uniform_score(rng, params))
            )
    return detections


def run_noisy(dataset: Dataset, params: DetectorParams) -> list[Detection]:
    """Oracle with per-part drop probability and per-coordinate box jitter."""
    by_image = _annotations_by_image(dataset)
    detections = []
    for i, im in enumerate(dataset.images):
        rng = substream(params.seed, _STREAM_NOISY, i)
        extent = ImageExtent(im.width, im.height)
        for ann in by_image.get(im.image_id, []):
            if ann.presence is not Presence.PRESENT:
                continue
            dropped = rng.random() < params.drop_prob
            noise = params.jitter_std * rng.standard_normal(4)
            score = _uniform_score(rng, params)
            if dropped:
                continue
            box = ann.box
            if params.jitter_std > 0:
                x0, y0, x1, y1 = (
                    float(box.x_min + noise[0]),
                    float(box.y_min + noise[1]),
                    float(box.x_max + noise[2]),
                    float(box.y_max + noise[3]),
                )
                box = clip(
                    Box(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1)), extent
                )
            detections.append(Detection(ann.image_id, ann.part_class, box, score))
    return detections


def run_detector(dataset: Dataset, params: DetectorParams) -> list[Detection]:
    """Dispatch on ``params.kind``."""
    runner = {"oracle": run_oracle, "prior": run_prior, "noisy": run_noisy}[params.kind]
    return runner(dataset, params)
