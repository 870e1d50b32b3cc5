"""
Synthetic single-channel scenes standing in for colonoscopy frames.

Polyps are filled disks; each artifact class has its own primitive
(rings for bubbles, bright squares for specularity, smoothed patches for
blur, clipped patches for saturation, flattened patches for contrast and
random rectangles for misc). Every box is the tight pixel bound of its
primitive.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from config.config import GRID_SIZE
from core.datamodel import (ANALYSIS_CLASSES, ArtifactClass, Dataset, Detection, FrameRecord,
                            PolypLabel)
from core.errors import ConfigError
from core.geometry import Box, ImageSize

logger = logging.getLogger('polyplab')

BACKGROUND_LEVEL = 0.35
POLYP_GAIN = 0.4
SPECULARITY_SIDES = (2, 4)
RING_RADII = (3, 7)
PATCH_SIDES = (10, 20)
SATURATION_SIDES = (6, 12)
MISC_SIDES = (4, 14)
PLACEMENT_TRIES = 50


@dataclass(frozen=True)
class SceneKnobs:
    """Difficulty knobs for scene generation"""
    size: int = GRID_SIZE
    polyps: int = 1
    polyp_radius: tuple[int, int] = (4, 10)
    artifacts_per_class: int = 1
    artifact_classes: tuple = ANALYSIS_CLASSES
    specularity_inside_polyp: float = 0.0
    overlap_polyp: float = 0.0        # bubbles / misc drawn on top of a polyp
    confusability: float = 0.0        # 1 makes bubble rings as thick as disks
    noise: float = 0.02

    def __post_init__(self):
        lo, hi = self.polyp_radius
        if self.size < 16:
            raise ConfigError(f"scene size must be at least 16, got {self.size}")
        if self.polyps < 0 or self.artifacts_per_class < 0:
            raise ConfigError("primitive counts must be >= 0")
        if lo < 3 or hi < lo:
            raise ConfigError(f"polyp radius range must satisfy 3 <= lo <= hi, got {self.polyp_radius}")
        if 2 * hi + 2 > self.size:
            raise ConfigError(f"polyp radius {hi} does not fit a {self.size}px grid")
        largest = {
            ArtifactClass.BLUR: PATCH_SIDES[1],
            ArtifactClass.CONTRAST: PATCH_SIDES[1],
            ArtifactClass.MISC: MISC_SIDES[1],
            ArtifactClass.BUBBLES: 2 * RING_RADII[1],
            ArtifactClass.SATURATION: SATURATION_SIDES[1],
            ArtifactClass.SPECULARITY: SPECULARITY_SIDES[1],
        }
        for cls in self.artifact_classes:
            if largest.get(cls, 0) > self.size:
                raise ConfigError(f"{cls.key} primitives do not fit a {self.size}px grid")
        for name in ('specularity_inside_polyp', 'overlap_polyp', 'confusability'):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if self.polyps == 0 and (self.specularity_inside_polyp > 0 or self.overlap_polyp > 0):
            raise ConfigError("artifact-on-polyp placement needs at least one polyp")
        if ArtifactClass.INSTRUMENT in self.artifact_classes:
            raise ConfigError("instrument primitives are not generated")


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    grid: np.ndarray
    gt_polyps: tuple[Box, ...]
    gt_artifacts: tuple[tuple[Box, ArtifactClass], ...]
    seed: int
    frame_id: str = ''

    @property
    def size(self) -> int:
        return self.grid.shape[0]

    @property
    def image(self) -> ImageSize:
        return ImageSize(self.grid.shape[1], self.grid.shape[0])

    def with_annotations(self, frame: FrameRecord) -> 'SyntheticScene':
        """Same pixels, ground truth taken from a (possibly pseudo-labelled) frame"""
        artifacts = tuple((a.box, a.label) for a in frame.artifacts)
        return replace(self, gt_polyps=tuple(frame.gt_polyps), gt_artifacts=artifacts)


def _mask_box(mask: np.ndarray) -> Box:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return Box(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def _disk(size: int, cx: float, cy: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return (xx + 0.5 - cx) ** 2 + (yy + 0.5 - cy) ** 2 <= r * r


def _mean_filter(grid: np.ndarray, k: int = 5) -> np.ndarray:
    pad = k // 2
    padded = np.pad(grid, pad, mode='edge')
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    return windows.mean(axis=(2, 3))


def _overlaps_any(box: Box, others: Sequence[Box]) -> bool:
    return any(box.x_min < o.x_max and o.x_min < box.x_max and box.y_min < o.y_max and o.y_min < box.y_max
               for o in others)


class _SceneBuilder:
    """Draws primitives onto one grid with one RNG stream"""

    def __init__(self, seed: int, knobs: SceneKnobs):
        self.rng = np.random.default_rng(seed)
        self.knobs = knobs
        self.size = knobs.size
        self.grid = BACKGROUND_LEVEL + knobs.noise * self.rng.standard_normal((self.size, self.size))
        self.polyps: list[Box] = []
        self.polyp_disks: list[tuple[int, int, int]] = []
        self.artifacts: list[tuple[Box, ArtifactClass]] = []

    def _free_rect(self, w: int, h: int) -> tuple[int, int]:
        """Top-left corner of a w x h rectangle, avoiding polyps when possible"""
        x0 = y0 = 0
        for _ in range(PLACEMENT_TRIES):
            x0 = int(self.rng.integers(0, self.size - w + 1))
            y0 = int(self.rng.integers(0, self.size - h + 1))
            if not _overlaps_any(Box(x0, y0, x0 + w, y0 + h), self.polyps):
                break
        return x0, y0

    def add_polyp(self):
        lo, hi = self.knobs.polyp_radius
        r = int(self.rng.integers(lo, hi + 1))
        cx = int(self.rng.integers(r, self.size - r + 1))
        cy = int(self.rng.integers(r, self.size - r + 1))
        mask = _disk(self.size, cx, cy, r)
        self.grid[mask] += POLYP_GAIN
        self.polyps.append(_mask_box(mask))
        self.polyp_disks.append((cx, cy, r))

    def _on_polyp(self, rate: float) -> Optional[int]:
        if self.polyps and rate > 0 and self.rng.random() < rate:
            return int(self.rng.integers(0, len(self.polyps)))
        return None

    def add_specularity(self):
        side = int(self.rng.integers(SPECULARITY_SIDES[0], SPECULARITY_SIDES[1] + 1))
        target = self._on_polyp(self.knobs.specularity_inside_polyp)
        if target is not None:
            host = self.polyps[target]
            side = min(side, int(host.width), int(host.height))
            x0 = int(self.rng.integers(int(host.x_min), int(host.x_max) - side + 1))
            y0 = int(self.rng.integers(int(host.y_min), int(host.y_max) - side + 1))
        else:
            x0, y0 = self._free_rect(side, side)
        self.grid[y0:y0 + side, x0:x0 + side] = 1.0
        self.artifacts.append((Box(x0, y0, x0 + side, y0 + side), ArtifactClass.SPECULARITY))

    def add_bubble(self):
        target = self._on_polyp(self.knobs.overlap_polyp)
        if target is not None:
            cx, cy, r = self.polyp_disks[target]
        else:
            r = int(self.rng.integers(RING_RADII[0], RING_RADII[1] + 1))
            x0, y0 = self._free_rect(2 * r, 2 * r)
            cx, cy = x0 + r, y0 + r
        width = 1.0 + self.knobs.confusability * (r - 1)
        outer = _disk(self.size, cx, cy, r)
        inner = _disk(self.size, cx, cy, r - width) if r - width > 0 else np.zeros_like(outer)
        ring = outer & ~inner
        self.grid[ring] += POLYP_GAIN
        self.artifacts.append((_mask_box(ring), ArtifactClass.BUBBLES))

    def _patch(self, sides: tuple[int, int]) -> tuple[int, int, int, int]:
        w = int(self.rng.integers(sides[0], sides[1] + 1))
        h = int(self.rng.integers(sides[0], sides[1] + 1))
        x0, y0 = self._free_rect(w, h)
        return x0, y0, w, h

    def add_blur(self):
        x0, y0, w, h = self._patch(PATCH_SIDES)
        smoothed = _mean_filter(self.grid)
        self.grid[y0:y0 + h, x0:x0 + w] = smoothed[y0:y0 + h, x0:x0 + w]
        self.artifacts.append((Box(x0, y0, x0 + w, y0 + h), ArtifactClass.BLUR))

    def add_saturation(self):
        x0, y0, w, h = self._patch(SATURATION_SIDES)
        region = self.grid[y0:y0 + h, x0:x0 + w]
        self.grid[y0:y0 + h, x0:x0 + w] = np.minimum(region + 0.6, 1.0)
        self.artifacts.append((Box(x0, y0, x0 + w, y0 + h), ArtifactClass.SATURATION))

    def add_contrast(self):
        x0, y0, w, h = self._patch(PATCH_SIDES)
        region = self.grid[y0:y0 + h, x0:x0 + w]
        mean = region.mean()
        self.grid[y0:y0 + h, x0:x0 + w] = mean + 0.2 * (region - mean)
        self.artifacts.append((Box(x0, y0, x0 + w, y0 + h), ArtifactClass.CONTRAST))

    def add_misc(self):
        target = self._on_polyp(self.knobs.overlap_polyp)
        if target is not None:
            host = self.polyps[target]
            x0, y0 = int(host.x_min), int(host.y_min)
            w, h = int(host.width), int(host.height)
        else:
            x0, y0, w, h = self._patch(MISC_SIDES)
        self.grid[y0:y0 + h, x0:x0 + w] = self.rng.uniform(0.0, 1.0)
        self.artifacts.append((Box(x0, y0, x0 + w, y0 + h), ArtifactClass.MISC))

    def build(self, seed: int) -> SyntheticScene:
        draw = {
            ArtifactClass.BLUR: self.add_blur,
            ArtifactClass.BUBBLES: self.add_bubble,
            ArtifactClass.CONTRAST: self.add_contrast,
            ArtifactClass.SPECULARITY: self.add_specularity,
            ArtifactClass.SATURATION: self.add_saturation,
            ArtifactClass.MISC: self.add_misc,
        }
        for _ in range(self.knobs.polyps):
            self.add_polyp()
        for cls in sorted(self.knobs.artifact_classes):
            for _ in range(self.knobs.artifacts_per_class):
                draw[cls]()
        grid = np.clip(self.grid, 0.0, 1.0)
        return SyntheticScene(grid, tuple(self.polyps), tuple(self.artifacts), seed, f"scene-{seed}")


def generate_scene(seed: int, knobs: Optional[SceneKnobs] = None) -> SyntheticScene:
    """Deterministic scene for a seed"""
    knobs = knobs or SceneKnobs()
    if int(seed) != seed or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed}")
    return _SceneBuilder(int(seed), knobs).build(int(seed))


def generate_scenes(count: int, base_seed: int = 0, knobs: Optional[SceneKnobs] = None) -> list[SyntheticScene]:
    return [generate_scene(base_seed + i, knobs) for i in range(count)]


def scene_to_frame(scene: SyntheticScene, detections: Optional[Sequence[Detection]] = None) -> FrameRecord:
    """Frame record for a scene.

    Without detections the scene's own artifacts are written with score 1.
    With detections, polyp detections become predictions and artifact
    detections replace the artifacts.
    """
    if detections is None:
        preds = ()
        artifacts = tuple(Detection(box, 1.0, cls) for box, cls in scene.gt_artifacts)
    else:
        preds = tuple(d for d in detections if d.label == PolypLabel.POLYP)
        artifacts = tuple(d for d in detections if d.is_artifact)
    return FrameRecord(scene.frame_id, scene.image, tuple(scene.gt_polyps), preds, artifacts)


def scenes_to_dataset(scenes: Sequence[SyntheticScene], name: str = 'synthetic',
                      detections: Optional[Sequence[Sequence[Detection]]] = None) -> Dataset:
    frames = []
    for i, scene in enumerate(scenes):
        frames.append(scene_to_frame(scene, detections[i] if detections is not None else None))
    return Dataset(name, tuple(frames), f"{len(scenes)} synthetic scenes")


def annotate_scenes(scenes: Sequence[SyntheticScene], d: Dataset) -> list[SyntheticScene]:
    """Swap each scene's annotations for the dataset frame with the same id"""
    by_id = {f.frame_id: f for f in d.frames}
    annotated = []
    for scene in scenes:
        frame = by_id.get(scene.frame_id)
        if frame is None:
            raise ConfigError(f"dataset '{d.name}' has no frame '{scene.frame_id}'")
        annotated.append(scene.with_annotations(frame))
    return annotated
