"""
Centroid-criterion validation: per-frame matching and micro-averaged
precision / recall / F-beta.

A detection is a true positive when its box center falls inside a
ground-truth polyp box. Strict mode lets each ground truth absorb one
detection (later duplicates are false positives); analysis mode keeps
every duplicate as a true positive.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from core.datamodel import Detection
from core.errors import ModeMixError
from core.geometry import Box, centroid_inside


class MatchMode(Enum):
    STRICT = 'strict'
    ANALYSIS = 'analysis'


@dataclass(frozen=True)
class MatchOutcome:
    """Per-frame matching result; indices refer to the caller's lists"""
    tp_pairs: tuple[tuple[int, int], ...]
    fp: tuple[int, ...]
    fn: tuple[int, ...]
    mode: MatchMode

    @property
    def tp_count(self) -> int:
        return len(self.tp_pairs)

    @property
    def tp_detections(self) -> list[int]:
        return [d for d, _ in self.tp_pairs]


@dataclass(frozen=True)
class Metrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    f2: float = 0.0

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> 'Metrics':
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return cls(tp, fp, fn, precision, recall,
                   f_beta(precision, recall, 1.0), f_beta(precision, recall, 2.0))


def f_beta(precision: float, recall: float, beta: float) -> float:
    """(1 + b^2) P R / (b^2 P + R), 0 when both are 0"""
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1 + b2) * precision * recall / denom


def match_frame(gt: Sequence[Box], dets: Sequence[Detection], score_threshold: float,
                mode: MatchMode = MatchMode.STRICT) -> MatchOutcome:
    """Match detections to ground-truth boxes with the centroid criterion"""
    survivors = [i for i, d in enumerate(dets) if d.score >= score_threshold]
    # stable sort keeps input order among equal scores
    survivors.sort(key=lambda i: -dets[i].score)

    tp_pairs = []
    fp = []
    if mode == MatchMode.STRICT:
        matched = [False] * len(gt)
        for i in survivors:
            for g, box in enumerate(gt):
                if not matched[g] and centroid_inside(dets[i].box, box):
                    matched[g] = True
                    tp_pairs.append((i, g))
                    break
            else:
                fp.append(i)
        fn = [g for g in range(len(gt)) if not matched[g]]
    else:
        hit = [False] * len(gt)
        for i in survivors:
            inside = [g for g, box in enumerate(gt) if centroid_inside(dets[i].box, box)]
            if inside:
                tp_pairs.append((i, inside[0]))
                for g in inside:
                    hit[g] = True
            else:
                fp.append(i)
        fn = [g for g in range(len(gt)) if not hit[g]]

    return MatchOutcome(tuple(tp_pairs), tuple(fp), tuple(fn), mode)


def metrics(outcomes: Iterable[MatchOutcome]) -> Metrics:
    """Micro-aggregate counts over frames; all outcomes must share one mode"""
    outcomes = list(outcomes)
    modes = {o.mode for o in outcomes}
    if len(modes) > 1:
        raise ModeMixError(f"cannot aggregate outcomes from modes {sorted(m.value for m in modes)}")
    tp = sum(o.tp_count for o in outcomes)
    fp = sum(len(o.fp) for o in outcomes)
    fn = sum(len(o.fn) for o in outcomes)
    return Metrics.from_counts(tp, fp, fn)


def evaluate_dataset(frames, det_threshold: float, mode: MatchMode = MatchMode.STRICT) -> Metrics:
    """Metrics over FrameRecords using their ground-truth and predicted polyps"""
    return metrics(match_frame(f.gt_polyps, f.pred_polyps, det_threshold, mode) for f in frames)
