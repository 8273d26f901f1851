"""Box arithmetic: IoU, expansion, shrinking, mirroring, clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Box


@dataclass(frozen=True)
class ImageExtent:
    """Image bounds in pixels."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"extent must be positive, got {self.width}x{self.height}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union. Zero-area boxes have IoU 0 with everything."""
    if a.area <= 0.0 or b.area <= 0.0:
        return 0.0
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU for (N, 4) and (M, 4) arrays of xyxy boxes -> (N, M)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    valid = (area_a[:, None] > 0) & (area_b[None, :] > 0) & (union > 0)
    np.divide(inter, union, out=out, where=valid)
    return out


def clip(box: Box, extent: ImageExtent) -> Box:
    """Clip a box to [0, width] x [0, height]."""
    w, h = float(extent.width), float(extent.height)
    return Box(
        min(max(box.x_min, 0.0), w),
        min(max(box.y_min, 0.0), h),
        min(max(box.x_max, 0.0), w),
        min(max(box.y_max, 0.0), h),
    )


def expand(box: Box, c: float, extent: ImageExtent) -> Box:
    """Move every side outward by ``c`` pixels, then clip to the extent."""
    if c < 0:
        raise ValueError(f"context size must be non-negative, got {c}")
    return clip(Box(box.x_min - c, box.y_min - c, box.x_max + c, box.y_max + c), extent)


def shrink(box: Box, c: float) -> Box | None:
    """Move every side inward by ``c`` pixels.

    Returns None when the inset degenerates (2c >= width or 2c >= height).
    """
    if c < 0:
        raise ValueError(f"context size must be non-negative, got {c}")
    if 2 * c >= box.width or 2 * c >= box.height:
        return None
    return Box(box.x_min + c, box.y_min + c, box.x_max - c, box.y_max - c)


def pixel_slices(box: Box, extent: ImageExtent) -> tuple[slice, slice]:
    """(row, column) slices covering a box on a raster of this extent.

    Each coordinate rounds half-up to the nearest pixel edge, so boxes
    sharing a float edge tile the raster without seams or overlaps.
    """
    x0 = min(max(int(math.floor(box.x_min + 0.5)), 0), extent.width)
    x1 = min(max(int(math.floor(box.x_max + 0.5)), x0), extent.width)
    y0 = min(max(int(math.floor(box.y_min + 0.5)), 0), extent.height)
    y1 = min(max(int(math.floor(box.y_max + 0.5)), y0), extent.height)
    return slice(y0, y1), slice(x0, x1)


def mirror_about_center(box: Box, extent: ImageExtent) -> Box:
    """Reflect a box through the image center, preserving its size.

    The reflected center is (width - cx, height - cy). If the reflected box
    would overhang the image (possible only for out-of-bounds inputs), its
    position is clamped back inside; the size is never altered.
    """
    cx, cy = box.center
    w, h = box.width, box.height
    nx = float(extent.width) - cx
    ny = float(extent.height) - cy
    x_min = nx - w / 2.0
    y_min = ny - h / 2.0
    x_min = min(max(x_min, 0.0), float(extent.width) - w)
    y_min = min(max(y_min, 0.0), float(extent.height) - h)
    return Box(x_min, y_min, x_min + w, y_min + h)
