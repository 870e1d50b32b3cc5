"""
Axis-aligned box arithmetic in pixel coordinates.

Boxes use the continuous-geometry convention: a box covers the half-open
region [x_min, x_max) x [y_min, y_max), so its area is width * height and
integer boxes cover exactly the pixels a rasterizer would paint.
"""
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from core.errors import InvariantError


@dataclass(frozen=True)
class ImageSize:
    """Frame dimensions in pixels"""
    width: int
    height: int

    def __post_init__(self):
        if isinstance(self.width, bool) or isinstance(self.height, bool) or \
                not isinstance(self.width, (int, float)) or not isinstance(self.height, (int, float)):
            raise InvariantError(f"image size must be numeric, got {self.width!r}x{self.height!r}")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise InvariantError(f"image size must be integral, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if self.width < 1 or self.height < 1:
            raise InvariantError(f"image size must be positive, got {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class Box:
    """Axis-aligned bounding box; zero or negative area is rejected"""
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise InvariantError(f"box coordinates must be finite, got {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvariantError(f"box must satisfy x_min < x_max and y_min < y_max, got {coords}")

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> 'Box':
        if len(values) != 4:
            raise InvariantError(f"box needs 4 coordinates, got {len(values)}")
        return cls(*(float(v) for v in values))

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
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def clip(self, img: ImageSize) -> Optional['Box']:
        """Intersection with the image frame, or None if nothing is left"""
        x0, y0 = max(self.x_min, 0.0), max(self.y_min, 0.0)
        x1, y1 = min(self.x_max, float(img.width)), min(self.y_max, float(img.height))
        if x0 >= x1 or y0 >= y1:
            return None
        return Box(x0, y0, x1, y1)


def intersection_area(a: Box, b: Box) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection over union; symmetric and 0 for disjoint boxes"""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def centroid_inside(det: Box, gt: Box) -> bool:
    """True if the center of det lies in gt, edges included"""
    cx, cy = det.center
    return gt.x_min <= cx <= gt.x_max and gt.y_min <= cy <= gt.y_max


def contains(outer: Box, inner: Box) -> bool:
    """True if inner lies entirely within outer, shared edges allowed"""
    return (outer.x_min <= inner.x_min and outer.y_min <= inner.y_min
            and inner.x_max <= outer.x_max and inner.y_max <= outer.y_max)


def union_area(boxes: Iterable[Box]) -> float:
    """Exact area of the union of boxes (coordinate-compression sweep over x)"""
    boxes = list(boxes)
    if not boxes:
        return 0.0

    xs = sorted({b.x_min for b in boxes} | {b.x_max for b in boxes})
    total = 0.0
    for left, right in zip(xs, xs[1:]):
        # y-intervals of every box spanning this slab
        spans = sorted((b.y_min, b.y_max) for b in boxes if b.x_min <= left and b.x_max >= right)
        if not spans:
            continue
        covered = 0.0
        cur_lo, cur_hi = spans[0]
        for lo, hi in spans[1:]:
            if lo > cur_hi:
                covered += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            elif hi > cur_hi:
                cur_hi = hi
        covered += cur_hi - cur_lo
        total += covered * (right - left)
    return total


def union_area_fraction(boxes: Iterable[Box], img: ImageSize) -> float:
    """Share of the image covered by the union of boxes, each clipped to the image"""
    clipped = [c for c in (b.clip(img) for b in boxes) if c is not None]
    if not clipped:
        return 0.0
    return union_area(clipped) / img.area


def boxes_to_array(boxes: Sequence[Box]) -> np.ndarray:
    """Stack boxes into an (N, 4) float array"""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between (N, 4) and (M, 4) box arrays"""
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    xx1 = np.maximum(a[:, None, 0], b[None, :, 0])
    yy1 = np.maximum(a[:, None, 1], b[None, :, 1])
    xx2 = np.minimum(a[:, None, 2], b[None, :, 2])
    yy2 = np.minimum(a[:, None, 3], b[None, :, 3])

    inter = np.maximum(0.0, xx2 - xx1) * np.maximum(0.0, yy2 - yy1)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0, inter / np.where(union > 0, union, 1.0), 0.0)
