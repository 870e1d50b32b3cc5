"""
Composite-loss training for the toy detector.

Per scene the objective is w_pol * l_p + w_art * l_a + w_reg * l_reg, each
classification term a focal loss summed over non-ignored anchors and
active classes and divided by max(1, foreground anchors). The batch loss
is the mean over scenes plus lambda * sum(theta^2). Gradients are
back-propagated by hand through the heads and the tanh trunk.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from core.datamodel import ANALYSIS_CLASSES, ArtifactClass, LabelMode, PolypLabel
from core.errors import ConfigError, DivergenceError, DomainError
from core.losses import (IGNORED, LossConfig, assign_anchors, composite_loss,
                         focal_loss_logits, smooth_l1, weighted_class_loss)
from core.toy.model import (ARTIFACT_HEAD, FLAT_HEAD, POLYP_HEAD, REGRESSION, SHARED, Architecture,
                            ToyModel, anchor_boxes, forward)
from core.toy.scenes import SyntheticScene

logger = logging.getLogger('polyplab')


@dataclass(frozen=True)
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    steps: int = 500
    learning_rate: float = 0.01
    batch_size: int = 8
    seed: int = 0
    mode: LabelMode = LabelMode.TWO_HEAD
    included_artifacts: frozenset = frozenset(ANALYSIS_CLASSES)
    # regression also trains on artifact boxes
    regress_artifacts: bool = True
    log_every: int = 100

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps must be an integer >= 1, got {self.steps}")
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ConfigError(f"learning rate must be finite and >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.included_artifacts or ArtifactClass.INSTRUMENT in self.included_artifacts:
            raise ConfigError("included artifacts must be a non-empty set of analysis classes")


@dataclass(frozen=True)
class HeadTargets:
    """Binary targets for one classification head"""
    y: np.ndarray          # (anchors, classes) 0/1
    mask: np.ndarray       # (anchors,) False for ignored anchors
    active: np.ndarray     # (classes,) columns that contribute
    norm: float            # max(1, foreground anchors)


@dataclass(frozen=True)
class SceneTargets:
    heads: dict
    reg_fg: np.ndarray
    reg_targets: np.ndarray
    reg_norm: float


def _head_targets(anchors: np.ndarray, gts: list, classes: int, active_columns) -> HeadTargets:
    assigned = assign_anchors(anchors, gts)
    y = np.zeros((anchors.shape[0], classes))
    fg = assigned.foreground
    y[np.flatnonzero(fg), assigned.labels[fg]] = 1.0
    active = np.zeros(classes, dtype=bool)
    active[list(active_columns)] = True
    return HeadTargets(y, assigned.labels != IGNORED, active, float(max(1, assigned.num_foreground)))


def build_targets(scene: SyntheticScene, arch: Architecture,
                  included_artifacts=frozenset(ANALYSIS_CLASSES),
                  regress_artifacts: bool = True) -> SceneTargets:
    """Anchor targets for every head of the architecture"""
    anchors = anchor_boxes(arch)
    polyps = [(b, 0) for b in scene.gt_polyps]
    artifacts = [(b, int(c)) for b, c in scene.gt_artifacts if c in included_artifacts]
    included = sorted(int(c) for c in included_artifacts)

    if arch.mode == LabelMode.FLAT:
        flat_gts = polyps + [(b, c + 1) for b, c in artifacts]
        heads = {FLAT_HEAD: _head_targets(anchors, flat_gts, 1 + len(ANALYSIS_CLASSES),
                                          [0] + [c + 1 for c in included])}
    else:
        heads = {
            POLYP_HEAD: _head_targets(anchors, polyps, 1, [0]),
            ARTIFACT_HEAD: _head_targets(anchors, artifacts, len(ANALYSIS_CLASSES), included),
        }

    reg = assign_anchors(anchors, polyps + artifacts if regress_artifacts else polyps)
    return SceneTargets(heads, reg.foreground, reg.regression, float(max(1, reg.num_foreground)))


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    polyp: float
    artifact: float
    regression: float
    regularizer: float

    def as_row(self) -> list[float]:
        return [self.total, self.polyp, self.artifact, self.regression, self.regularizer]


def _column_labels(head: str, classes: int) -> list:
    if head == POLYP_HEAD:
        return [PolypLabel.POLYP]
    if head == ARTIFACT_HEAD:
        return [ArtifactClass(k) for k in range(classes)]
    return [PolypLabel.POLYP] + [ArtifactClass(k) for k in range(classes - 1)]


def _class_scale(labels: list, active: np.ndarray, class_weights: Optional[dict]) -> np.ndarray:
    """Per-column multiplier: 1, or (number of weighted labels) * weight"""
    if class_weights is None:
        return np.ones(len(labels))
    n = len(class_weights)
    per_column = {label: 1.0 for label, on in zip(labels, active) if on}
    weighted_class_loss(per_column, class_weights)  # raises MissingWeight
    return np.array([n * class_weights.get(label, 0.0) if on else 0.0 for label, on in zip(labels, active)])


def _zero_grads(model: ToyModel) -> dict:
    return {b: {n: np.zeros_like(v) for n, v in arrays.items()} for b, arrays in model.params.items()}


def loss_and_grads(model: ToyModel, scenes: Sequence[SyntheticScene], targets: Sequence[SceneTargets],
                   cfg: LossConfig, with_grads: bool = True):
    """Batch LossBreakdown and (optionally) parameter gradients of its total"""
    if not scenes:
        raise ConfigError("loss needs at least one scene")
    batch = len(scenes)
    grads = _zero_grads(model) if with_grads else None
    sums = {'polyp': 0.0, 'artifact': 0.0, 'regression': 0.0}

    for scene, tgt in zip(scenes, targets):
        out = forward(model, scene)
        d_hidden = np.zeros_like(out.hidden)

        for head, ht in tgt.heads.items():
            z = out.logits[head]
            labels = _column_labels(head, z.shape[1])
            scale = _class_scale(labels, ht.active, cfg.class_weights)
            loss, d_z = focal_loss_logits(z, ht.y, cfg.focal)
            keep = ht.mask[:, None] * ht.active[None, :]
            column_loss = (loss * keep).sum(axis=0) / ht.norm * scale

            is_polyp = np.array([label == PolypLabel.POLYP for label in labels])
            sums['polyp'] += float(column_loss[is_polyp].sum())
            sums['artifact'] += float(column_loss[~is_polyp].sum())

            if with_grads:
                task_weight = np.where(is_polyp, cfg.w_pol, cfg.w_art)
                d_z = d_z * keep * (scale * task_weight / (ht.norm * batch))[None, :]
                g = d_z.reshape(out.hidden.shape[0], -1)
                grads[head]['W'] += out.hidden.T @ g
                grads[head]['b'] += g.sum(axis=0)
                d_hidden += g @ model.params[head]['W'].T

        residual = out.offsets[tgt.reg_fg] - tgt.reg_targets[tgt.reg_fg]
        reg_loss, d_res = smooth_l1(residual)
        sums['regression'] += float(np.sum(reg_loss)) / tgt.reg_norm

        if with_grads:
            d_off = np.zeros_like(out.offsets)
            d_off[tgt.reg_fg] = d_res * (cfg.w_reg / (tgt.reg_norm * batch))
            g = d_off.reshape(out.hidden.shape[0], -1)
            grads[REGRESSION]['W'] += out.hidden.T @ g
            grads[REGRESSION]['b'] += g.sum(axis=0)
            d_hidden += g @ model.params[REGRESSION]['W'].T

            d_pre = d_hidden * (1.0 - out.hidden * out.hidden)
            grads[SHARED]['W'] += out.features.T @ d_pre
            grads[SHARED]['b'] += d_pre.sum(axis=0)

    regularizer = model.squared_norm()
    if with_grads and cfg.reg_coeff > 0:
        for block, arrays in model.params.items():
            for name, value in arrays.items():
                grads[block][name] += 2.0 * cfg.reg_coeff * value

    polyp, artifact, regression = (sums[k] / batch for k in ('polyp', 'artifact', 'regression'))
    total = composite_loss(polyp, artifact, regression, regularizer, cfg)
    return LossBreakdown(total, polyp, artifact, regression, regularizer), grads


def evaluate_loss(model: ToyModel, scenes: Sequence[SyntheticScene], cfg: LossConfig,
                  targets: Optional[Sequence[SceneTargets]] = None, **target_options) -> LossBreakdown:
    """Composite loss over a whole scene list"""
    if targets is None:
        targets = [build_targets(s, model.architecture, **target_options) for s in scenes]
    breakdown, _ = loss_and_grads(model, scenes, targets, cfg, with_grads=False)
    return breakdown


def train(model: ToyModel, data: Sequence[SyntheticScene], cfg: TrainConfig,
          on_step: Optional[Callable] = None) -> tuple[ToyModel, list[LossBreakdown]]:
    """Plain gradient descent on shuffled mini-batches; returns a trained copy and the per-step trace"""
    if not data:
        raise ConfigError("training needs at least one scene")
    if model.architecture.mode != cfg.mode:
        raise ConfigError(f"model is {model.architecture.mode.value} but config asks for {cfg.mode.value}")

    model = model.copy()
    targets = [build_targets(s, model.architecture, cfg.included_artifacts, cfg.regress_artifacts) for s in data]
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(data))
    cursor = 0
    trace = []

    logger.info(f"Training {cfg.mode.value} model on {len(data)} scenes for {cfg.steps} steps "
                f"(weights {cfg.loss.describe()}, lr {cfg.learning_rate:g})")
    for step in range(cfg.steps):
        if cursor + cfg.batch_size > len(order):
            order = rng.permutation(len(data))
            cursor = 0
        idx = order[cursor:cursor + min(cfg.batch_size, len(data))]
        cursor += len(idx)

        try:
            breakdown, grads = loss_and_grads(model, [data[i] for i in idx], [targets[i] for i in idx], cfg.loss)
        except DomainError as e:
            raise DivergenceError(f"loss became non-finite at step {step}: {e}") from None
        if not math.isfinite(breakdown.total):
            raise DivergenceError(f"loss became non-finite at step {step}")
        trace.append(breakdown)
        if on_step is not None:
            on_step(step, breakdown, model)

        with np.errstate(over='ignore', invalid='ignore'):
            model.apply_gradients(grads, cfg.learning_rate)
        if not model.is_finite():
            raise DivergenceError(f"parameters became non-finite at step {step}")
        if (step + 1) % cfg.log_every == 0:
            logger.info(f"step {step + 1}/{cfg.steps}: loss {breakdown.total:.6f}")

    return model, trace


def check_head_isolation(model: ToyModel, scenes: Sequence[SyntheticScene], cfg: LossConfig,
                         targets: Optional[Sequence[SceneTargets]] = None) -> float:
    """Largest |gradient| one task's loss sends into the other task's head"""
    if model.architecture.mode != LabelMode.TWO_HEAD:
        raise ConfigError("head isolation is only defined for the two-head architecture")
    if targets is None:
        targets = [build_targets(s, model.architecture) for s in scenes]

    worst = 0.0
    for weights, other in (((0.0, 1.0, 0.0), POLYP_HEAD), ((0.0, 0.0, 1.0), ARTIFACT_HEAD)):
        single = LossConfig(cfg.focal, weights, cfg.class_weights, 0.0)
        _, grads = loss_and_grads(model, scenes, targets, single)
        worst = max(worst, max(float(np.max(np.abs(g))) for g in grads[other].values()))
    return worst

