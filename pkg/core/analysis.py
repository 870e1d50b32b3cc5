"""
Artifact-effect analyses: presence versus detection performance, overlap and
containment shares per polyp-box category, and artifact co-occurrence.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from config.config import AREA_THRESHOLDS, ARTIFACT_THRESHOLD, DET_THRESHOLD, RELATION_IOU
from core.datamodel import ANALYSIS_CLASSES, ArtifactClass, Dataset, FrameRecord
from core.errors import ConfigError, TooFewFrames
from core.evaluation import MatchMode, Metrics, match_frame, metrics
from core.geometry import contains, iou, union_area_fraction

logger = logging.getLogger('polyplab')

METRIC_FIELDS = ('precision', 'recall', 'f1', 'f2')
CATEGORIES = ('ground-truth', 'TP', 'FP', 'FN')
ANY_ARTIFACT = 'any'


def _default_thresholds() -> dict:
    return {ArtifactClass.parse(name): t for name, t in AREA_THRESHOLDS.items()}


@dataclass(frozen=True)
class PresenceRule:
    """Per-class share of the image an artifact must cover to count as present"""
    thresholds: dict = field(default_factory=_default_thresholds)

    def __post_init__(self):
        for cls, t in self.thresholds.items():
            if not (0.0 <= t <= 1.0):
                raise ConfigError(f"area threshold for {cls.key} must lie in [0, 1], got {t}")

    def threshold(self, cls: ArtifactClass) -> float:
        return self.thresholds.get(cls, 0.0)

    def with_overrides(self, overrides: dict) -> 'PresenceRule':
        merged = dict(self.thresholds)
        merged.update(overrides)
        return PresenceRule(merged)


def artifact_present(frame: FrameRecord, cls: ArtifactClass, rule: PresenceRule,
                     min_score: float = 0.0) -> bool:
    boxes = frame.artifacts_of(cls, min_score)
    if not boxes:
        return False
    threshold = rule.threshold(cls)
    if threshold == 0:
        return True
    return union_area_fraction(boxes, frame.image) > threshold


# ---------------------------------------------------------------------------
# Presence analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PresenceRow:
    cls: ArtifactClass
    frequency: float
    n_present: int
    n_absent: int
    present: Metrics
    absent: Metrics
    # present minus absent, in percentage points; NaN for a degenerate split
    differences: dict
    degenerate: bool


@dataclass(frozen=True)
class PresenceReport:
    rows: tuple[PresenceRow, ...]
    overall: Metrics
    n_frames: int

    def row(self, cls: ArtifactClass) -> PresenceRow:
        return next(r for r in self.rows if r.cls == cls)


def presence_analysis(d: Dataset, rule: Optional[PresenceRule] = None, det_threshold: float = DET_THRESHOLD,
                      artifact_threshold: float = ARTIFACT_THRESHOLD) -> PresenceReport:
    """Compare strict-mode polyp metrics between frames with and without each artifact class"""
    rule = rule or PresenceRule()
    outcomes = [match_frame(f.gt_polyps, f.pred_polyps, det_threshold, MatchMode.STRICT) for f in d.frames]

    rows = []
    for cls in ANALYSIS_CLASSES:
        flags = [artifact_present(f, cls, rule, artifact_threshold) for f in d.frames]
        present = [o for o, p in zip(outcomes, flags) if p]
        absent = [o for o, p in zip(outcomes, flags) if not p]
        m_present, m_absent = metrics(present), metrics(absent)
        degenerate = not present or not absent
        if degenerate:
            logger.warning(f"Presence split for {cls.key} is degenerate "
                           f"({len(present)} present / {len(absent)} absent)")
            diffs = {k: math.nan for k in METRIC_FIELDS}
        else:
            diffs = {k: 100.0 * (getattr(m_present, k) - getattr(m_absent, k)) for k in METRIC_FIELDS}
        frequency = len(present) / len(flags) if flags else 0.0
        rows.append(PresenceRow(cls, frequency, len(present), len(absent), m_present, m_absent, diffs, degenerate))

    return PresenceReport(tuple(rows), metrics(outcomes), len(d.frames))


# ---------------------------------------------------------------------------
# Overlap / containment
# ---------------------------------------------------------------------------

class Relation(Enum):
    OVERLAP = 'overlap'
    CONTAINS = 'contain'


@dataclass(frozen=True)
class RelationReport:
    relation: Relation
    frequencies: dict                # category -> box count
    shares: dict                     # category -> {class key | 'any' -> share}
    is_delta: bool = False

    @property
    def columns(self) -> list[str]:
        return [c.key for c in ANALYSIS_CLASSES] + [ANY_ARTIFACT]


def _category_boxes(frame: FrameRecord, det_threshold: float, mode: MatchMode) -> dict:
    outcome = match_frame(frame.gt_polyps, frame.pred_polyps, det_threshold, mode)
    preds = frame.pred_polyps
    return {
        'ground-truth': list(frame.gt_polyps),
        'TP': [preds[i].box for i in outcome.tp_detections],
        'FP': [preds[i].box for i in outcome.fp],
        'FN': [frame.gt_polyps[g] for g in outcome.fn],
    }


def relation_analysis(d: Dataset, relation: Relation, iou_threshold: float = RELATION_IOU,
                      artifact_score_threshold: float = ARTIFACT_THRESHOLD,
                      det_threshold: float = DET_THRESHOLD,
                      mode: MatchMode = MatchMode.ANALYSIS) -> RelationReport:
    """Share of polyp boxes per category that overlap (IoU > threshold) or contain artifacts"""
    if relation == Relation.OVERLAP:
        def related(polyp, art):
            return iou(polyp, art) > iou_threshold
    else:
        def related(polyp, art):
            return contains(polyp, art)

    counts = {c: 0 for c in CATEGORIES}
    hits = {c: {k: 0 for k in [a.key for a in ANALYSIS_CLASSES] + [ANY_ARTIFACT]} for c in CATEGORIES}

    for frame in d.frames:
        per_class = {cls: frame.artifacts_of(cls, artifact_score_threshold) for cls in ANALYSIS_CLASSES}
        for category, boxes in _category_boxes(frame, det_threshold, mode).items():
            for box in boxes:
                counts[category] += 1
                any_hit = False
                for cls, arts in per_class.items():
                    if any(related(box, a) for a in arts):
                        hits[category][cls.key] += 1
                        any_hit = True
                if any_hit:
                    hits[category][ANY_ARTIFACT] += 1

    shares = {
        c: {k: (n / counts[c] if counts[c] else 0.0) for k, n in hits[c].items()}
        for c in CATEGORIES
    }
    return RelationReport(relation, counts, shares)


def relation_delta(before: RelationReport, after: RelationReport) -> RelationReport:
    """Share differences (after minus before), e.g. single-task versus multi-task detector"""
    if before.relation != after.relation:
        raise ConfigError(f"cannot compare {before.relation.value} with {after.relation.value} reports")
    shares = {
        c: {k: after.shares[c][k] - before.shares[c][k] for k in after.shares[c]}
        for c in CATEGORIES
    }
    return RelationReport(after.relation, dict(after.frequencies), shares, is_delta=True)


# ---------------------------------------------------------------------------
# Co-occurrence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationMatrix:
    classes: tuple[ArtifactClass, ...]
    values: np.ndarray
    # classes whose presence indicator is constant over the frames
    undefined: tuple[ArtifactClass, ...] = ()

    def get(self, a: ArtifactClass, b: ArtifactClass) -> float:
        return float(self.values[self.classes.index(a), self.classes.index(b)])


def presence_indicators(d: Dataset, rule: PresenceRule, artifact_threshold: float = ARTIFACT_THRESHOLD) -> np.ndarray:
    """(frames, classes) 0/1 matrix of artifact presence"""
    return np.array([[1.0 if artifact_present(f, cls, rule, artifact_threshold) else 0.0
                      for cls in ANALYSIS_CLASSES] for f in d.frames], dtype=np.float64).reshape(len(d.frames),
                                                                                           len(ANALYSIS_CLASSES))


def correlation_matrix(d: Dataset, rule: Optional[PresenceRule] = None,
                       artifact_threshold: float = ARTIFACT_THRESHOLD) -> CorrelationMatrix:
    """Phi coefficients between per-frame presence indicators of the six classes"""
    if len(d.frames) < 2:
        raise TooFewFrames(f"correlation needs at least 2 frames, got {len(d.frames)}")
    rule = rule or PresenceRule()
    x = presence_indicators(d, rule, artifact_threshold)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    std = np.sqrt(np.diag(cov))
    constant = std == 0

    with np.errstate(divide='ignore', invalid='ignore'):
        phi = cov / np.outer(std, std)
    phi = np.clip((phi + phi.T) / 2, -1.0, 1.0)
    phi[constant, :] = np.nan
    phi[:, constant] = np.nan
    np.fill_diagonal(phi, 1.0)

    undefined = tuple(cls for cls, c in zip(ANALYSIS_CLASSES, constant) if c)
    if undefined:
        logger.warning(f"Correlation undefined for constant indicators: {', '.join(c.key for c in undefined)}")
    return CorrelationMatrix(ANALYSIS_CLASSES, phi, undefined)


def coverage_by_class(d: Dataset, artifact_threshold: float = ARTIFACT_THRESHOLD) -> dict:
    """Per class, the union coverage fraction of every frame"""
    return {
        cls: [union_area_fraction(f.artifacts_of(cls, artifact_threshold), f.image) for f in d.frames]
        for cls in ANALYSIS_CLASSES
    }
