"""
Loss kernels for the multi-task detector: focal loss with its analytic
gradient, smooth L1, anchor target assignment and the weighted
composite objective.

All kernels accept scalars or numpy arrays and return (value, gradient)
pairs of the same shape.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from config.config import (BG_IOU, FG_IOU, FOCAL_ALPHA, FOCAL_GAMMA, PROB_CLAMP,
                           SMOOTH_L1_BETA)
from core.errors import ConfigError, DomainError, MissingWeight
from core.geometry import Box, boxes_to_array, pairwise_iou

BACKGROUND = -1
IGNORED = -2

# largest log-scale a decoded box may grow by
MAX_LOG_SCALE = math.log(1000.0 / 16)


@dataclass(frozen=True)
class FocalParams:
    gamma: float = FOCAL_GAMMA
    alpha: float = FOCAL_ALPHA

    def __post_init__(self):
        if not math.isfinite(self.gamma) or self.gamma < 0:
            raise ConfigError(f"focal gamma must be finite and >= 0, got {self.gamma}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"focal alpha must lie in (0, 1), got {self.alpha}")


def _unwrap(value: np.ndarray, scalar: bool):
    return float(value) if scalar else value


def sigmoid(z):
    """Logistic function; exactly 0.5 at 0"""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def focal_loss(q, y, params: Optional[FocalParams] = None):
    """-alpha* (1 - q*)^gamma log(q*) and its derivative with respect to q.

    q* is q for positives and 1 - q for negatives; alpha* likewise. q is
    clamped to [PROB_CLAMP, 1 - PROB_CLAMP]; the gradient is zero where the
    clamp is active.
    """
    params = params or FocalParams()
    q_arr = np.asarray(q, dtype=np.float64)
    y_arr = np.asarray(y)
    scalar = q_arr.ndim == 0 and y_arr.ndim == 0

    if not np.all(np.isfinite(q_arr)) or np.any((q_arr < 0.0) | (q_arr > 1.0)):
        raise DomainError("focal loss probability must lie in [0, 1]")
    if np.any((y_arr != 0) & (y_arr != 1)):
        raise DomainError("focal loss target must be 0 or 1")

    gamma, alpha = params.gamma, params.alpha
    qc = np.clip(q_arr, PROB_CLAMP, 1.0 - PROB_CLAMP)
    positive = y_arr == 1
    q_star = np.where(positive, qc, 1.0 - qc)
    alpha_star = np.where(positive, alpha, 1.0 - alpha)

    one_minus = 1.0 - q_star
    log_q = np.log(q_star)
    modulator = one_minus ** gamma
    loss = -alpha_star * modulator * log_q

    d_qstar = alpha_star * (gamma * one_minus ** (gamma - 1.0) * log_q - modulator / q_star)
    grad = np.where(positive, d_qstar, -d_qstar)
    grad = np.where((q_arr >= PROB_CLAMP) & (q_arr <= 1.0 - PROB_CLAMP), grad, 0.0)
    return _unwrap(loss, scalar), _unwrap(grad, scalar)


def focal_loss_logits(logits, y, params: Optional[FocalParams] = None):
    """Focal loss on logistic probabilities; gradient is with respect to the logits.

    Works on the signed logit s (z for positives, -z for negatives) with
    log q* = -softplus(-s), so no clamp is needed and saturated wrong
    logits keep a gradient.
    """
    params = params or FocalParams()
    z = np.asarray(logits, dtype=np.float64)
    y_arr = np.asarray(y)
    scalar = z.ndim == 0 and y_arr.ndim == 0

    if not np.all(np.isfinite(z)):
        raise DomainError("focal loss logits must be finite")
    if np.any((y_arr != 0) & (y_arr != 1)):
        raise DomainError("focal loss target must be 0 or 1")

    gamma, alpha = params.gamma, params.alpha
    positive = y_arr == 1
    sign = np.where(positive, 1.0, -1.0)
    s = sign * z
    alpha_star = np.where(positive, alpha, 1.0 - alpha)
    neg_log_q = np.logaddexp(0.0, -s)
    miss = sigmoid(-s)                 # 1 - q*
    modulator = miss ** gamma

    loss = alpha_star * modulator * neg_log_q
    d_s = -alpha_star * modulator * (gamma * sigmoid(s) * neg_log_q + miss)
    return _unwrap(loss, scalar), _unwrap(sign * d_s, scalar)


def smooth_l1(residual, beta: float = SMOOTH_L1_BETA):
    """0.5 r^2 / beta inside |r| < beta, |r| - 0.5 beta outside"""
    r = np.asarray(residual, dtype=np.float64)
    scalar = r.ndim == 0
    if not np.all(np.isfinite(r)):
        raise DomainError("smooth L1 residual must be finite")
    abs_r = np.abs(r)
    inside = abs_r < beta
    loss = np.where(inside, 0.5 * r * r / beta, abs_r - 0.5 * beta)
    grad = np.where(inside, r / beta, np.sign(r))
    return _unwrap(loss, scalar), _unwrap(grad, scalar)


# ---------------------------------------------------------------------------
# Anchor targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnchorTargets:
    """One assignment per anchor: class index >= 0, BACKGROUND or IGNORED"""
    labels: np.ndarray
    matched_gt: np.ndarray
    max_iou: np.ndarray
    regression: np.ndarray

    @property
    def foreground(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def background(self) -> np.ndarray:
        return self.labels == BACKGROUND

    @property
    def ignored(self) -> np.ndarray:
        return self.labels == IGNORED

    @property
    def num_foreground(self) -> int:
        return int(self.foreground.sum())


def encode_offsets(anchors: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """Center offsets scaled by anchor size, log size ratios"""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + 0.5 * aw
    acy = anchors[:, 1] + 0.5 * ah
    gw = gts[:, 2] - gts[:, 0]
    gh = gts[:, 3] - gts[:, 1]
    gcx = gts[:, 0] + 0.5 * gw
    gcy = gts[:, 1] + 0.5 * gh
    return np.stack([(gcx - acx) / aw, (gcy - acy) / ah, np.log(gw / aw), np.log(gh / ah)], axis=1)


def decode_offsets(anchors: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + 0.5 * aw
    acy = anchors[:, 1] + 0.5 * ah
    cx = acx + offsets[:, 0] * aw
    cy = acy + offsets[:, 1] * ah
    w = aw * np.exp(np.clip(offsets[:, 2], -MAX_LOG_SCALE, MAX_LOG_SCALE))
    h = ah * np.exp(np.clip(offsets[:, 3], -MAX_LOG_SCALE, MAX_LOG_SCALE))
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def assign_anchors(anchors, gts: Sequence[tuple[Box, int]],
                   fg_iou: float = FG_IOU, bg_iou: float = BG_IOU) -> AnchorTargets:
    """Foreground (class of the best gt) at IoU >= fg_iou, background below bg_iou, ignored between"""
    anchor_arr = anchors if isinstance(anchors, np.ndarray) else boxes_to_array(list(anchors))
    n = anchor_arr.shape[0]
    if n == 0:
        raise ConfigError("anchor assignment needs at least one anchor")

    labels = np.full(n, BACKGROUND, dtype=np.int64)
    matched = np.full(n, -1, dtype=np.int64)
    regression = np.zeros((n, 4), dtype=np.float64)
    if not gts:
        return AnchorTargets(labels, matched, np.zeros(n), regression)

    gt_arr = boxes_to_array([b for b, _ in gts])
    gt_cls = np.array([int(c) for _, c in gts], dtype=np.int64)
    overlaps = pairwise_iou(anchor_arr, gt_arr)
    best = overlaps.argmax(axis=1)
    max_iou = overlaps[np.arange(n), best]

    fg = max_iou >= fg_iou
    labels[(max_iou >= bg_iou) & ~fg] = IGNORED
    labels[fg] = gt_cls[best[fg]]
    matched[fg] = best[fg]
    if fg.any():
        regression[fg] = encode_offsets(anchor_arr[fg], gt_arr[best[fg]])
    return AnchorTargets(labels, matched, max_iou, regression)


# ---------------------------------------------------------------------------
# Composite objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossConfig:
    focal: FocalParams = field(default_factory=FocalParams)
    task_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # reg, art, pol
    class_weights: Optional[dict] = None
    reg_coeff: float = 0.0

    def __post_init__(self):
        if len(self.task_weights) != 3:
            raise ConfigError(f"task weights are (reg, art, pol), got {self.task_weights}")
        if any((not math.isfinite(w)) or w < 0 for w in self.task_weights):
            raise ConfigError(f"task weights must be finite and >= 0, got {self.task_weights}")
        if not any(w > 0 for w in self.task_weights):
            raise ConfigError("at least one task weight must be positive")
        if not math.isfinite(self.reg_coeff) or self.reg_coeff < 0:
            raise ConfigError(f"regularizer coefficient must be >= 0, got {self.reg_coeff}")

    @property
    def w_reg(self) -> float:
        return self.task_weights[0]

    @property
    def w_art(self) -> float:
        return self.task_weights[1]

    @property
    def w_pol(self) -> float:
        return self.task_weights[2]

    def describe(self) -> str:
        return ':'.join(f"{w:g}" for w in self.task_weights)


def composite_loss(polyp_cls_loss: float, artifact_cls_loss: float, reg_loss: float,
                   regularizer_value: float, cfg: LossConfig) -> float:
    """w_pol * l_p + w_art * l_a + w_reg * l_reg + lambda * R"""
    if not any(w > 0 for w in cfg.task_weights):
        raise ConfigError("at least one task weight must be positive")
    return (cfg.w_pol * polyp_cls_loss + cfg.w_art * artifact_cls_loss
            + cfg.w_reg * reg_loss + cfg.reg_coeff * regularizer_value)


def weighted_class_loss(per_class_losses: dict, weights: dict) -> float:
    """Sum of weight(label) * loss(label)"""
    total = 0.0
    for label, loss in per_class_losses.items():
        if label not in weights:
            raise MissingWeight(f"no class weight for label {getattr(label, 'key', label)}")
        total += weights[label] * loss
    return total
