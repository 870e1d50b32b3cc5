"""
Desk-scale anchor-based detector.

A fixed pooling front end turns the grid into one feature vector per
stride-8 cell; a shared affine+tanh trunk (theta_shared) feeds a shared
box-regression head and either two task heads (polyp: 1 class,
artifact: 6 classes) or one flat 7-class head. Every head is a per-cell
affine map with logistic outputs, 3 anchors per cell.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from config.config import (ANCHOR_SIZES, ANCHOR_STRIDE, CHECKPOINT_SCHEMA_VERSION, GRID_SIZE,
                           HIDDEN, INIT_SCALE, NMS_IOU, POOL, PROB_CLAMP, WINDOW)
from core.datamodel import ANALYSIS_CLASSES, ArtifactClass, Detection, LabelMode, PolypLabel
from core.errors import ConfigError, ParseError, ShapeError
from core.geometry import Box
from core.losses import decode_offsets, sigmoid
from core.toy.scenes import SyntheticScene

logger = logging.getLogger('polyplab')

SHARED = 'shared'
REGRESSION = 'reg'
POLYP_HEAD = 'polyp'
ARTIFACT_HEAD = 'artifact'
FLAT_HEAD = 'flat'


@dataclass(frozen=True)
class Architecture:
    grid: int = GRID_SIZE
    stride: int = ANCHOR_STRIDE
    pool: int = POOL
    window: int = WINDOW
    hidden: int = HIDDEN
    anchor_sizes: tuple = ANCHOR_SIZES
    mode: LabelMode = LabelMode.TWO_HEAD

    def __post_init__(self):
        if self.grid % self.stride or self.stride % self.pool:
            raise ConfigError(f"grid {self.grid} / stride {self.stride} / pool {self.pool} do not nest")
        if (self.window - self.stride // self.pool) % 2:
            raise ConfigError(f"window {self.window} cannot be centred on a cell")
        if self.hidden < 1 or not self.anchor_sizes:
            raise ConfigError("architecture needs hidden units and at least one anchor size")

    @property
    def cells(self) -> int:
        return self.grid // self.stride

    @property
    def anchors_per_cell(self) -> int:
        return len(self.anchor_sizes)

    @property
    def num_anchors(self) -> int:
        return self.cells * self.cells * self.anchors_per_cell

    @property
    def feature_dim(self) -> int:
        return 2 * self.window * self.window

    @property
    def pad(self) -> int:
        return (self.window - self.stride // self.pool) // 2

    @property
    def heads(self) -> dict:
        """Classification head name -> classes per anchor"""
        if self.mode == LabelMode.FLAT:
            return {FLAT_HEAD: 1 + len(ANALYSIS_CLASSES)}
        return {POLYP_HEAD: 1, ARTIFACT_HEAD: len(ANALYSIS_CLASSES)}

    def block_shapes(self) -> dict:
        a = self.anchors_per_cell
        shapes = {SHARED: {'W': (self.feature_dim, self.hidden), 'b': (self.hidden,)}}
        for head, k in self.heads.items():
            shapes[head] = {'W': (self.hidden, a * k), 'b': (a * k,)}
        shapes[REGRESSION] = {'W': (self.hidden, a * 4), 'b': (a * 4,)}
        return shapes

    def to_json(self) -> dict:
        payload = asdict(self)
        payload['anchor_sizes'] = list(self.anchor_sizes)
        payload['mode'] = self.mode.value
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> 'Architecture':
        payload = dict(payload)
        payload['anchor_sizes'] = tuple(payload['anchor_sizes'])
        payload['mode'] = LabelMode(payload['mode'])
        return cls(**payload)


def head_label(head: str, column: int) -> Union[PolypLabel, ArtifactClass]:
    if head == POLYP_HEAD:
        return PolypLabel.POLYP
    if head == ARTIFACT_HEAD:
        return ArtifactClass(column)
    return PolypLabel.POLYP if column == 0 else ArtifactClass(column - 1)


@dataclass
class ToyModel:
    """Parameter blocks keyed by block name ('shared', heads, 'reg')"""
    architecture: Architecture
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.architecture.block_shapes()
        if set(self.params) != set(shapes):
            raise ShapeError(f"parameter blocks {sorted(self.params)} do not match {sorted(shapes)}")
        for block, arrays in shapes.items():
            for name, shape in arrays.items():
                value = self.params[block].get(name)
                if value is None or value.shape != shape:
                    raise ShapeError(f"{block}.{name} must have shape {shape}")
                if not np.all(np.isfinite(value)):
                    raise ShapeError(f"{block}.{name} has non-finite values")

    @classmethod
    def zeros(cls, architecture: Architecture) -> 'ToyModel':
        params = {block: {name: np.zeros(shape) for name, shape in arrays.items()}
                  for block, arrays in architecture.block_shapes().items()}
        return cls(architecture, params)

    @classmethod
    def initialize(cls, architecture: Architecture, seed: int = 0, scale: float = INIT_SCALE) -> 'ToyModel':
        """Gaussian weights, zero biases"""
        rng = np.random.default_rng(seed)
        params = {}
        for block, arrays in architecture.block_shapes().items():
            params[block] = {
                'W': scale * rng.standard_normal(arrays['W']),
                'b': np.zeros(arrays['b']),
            }
        return cls(architecture, params)

    @property
    def theta_shared(self) -> dict:
        return self.params[SHARED]

    @property
    def theta_polyp(self) -> dict:
        return self.params.get(POLYP_HEAD) or self.params[FLAT_HEAD]

    @property
    def theta_artifact(self) -> dict:
        return self.params.get(ARTIFACT_HEAD) or self.params[FLAT_HEAD]

    @property
    def theta_reg(self) -> dict:
        return self.params[REGRESSION]

    def copy(self) -> 'ToyModel':
        return ToyModel(self.architecture, {b: {n: v.copy() for n, v in arrays.items()}
                                            for b, arrays in self.params.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for arrays in self.params.values() for v in arrays.values())

    def squared_norm(self) -> float:
        return float(sum(np.sum(v * v) for arrays in self.params.values() for v in arrays.values()))

    def apply_gradients(self, grads: dict, learning_rate: float) -> None:
        for block, arrays in grads.items():
            for name, g in arrays.items():
                self.params[block][name] -= learning_rate * g


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def anchor_boxes(arch: Architecture) -> np.ndarray:
    """(num_anchors, 4) anchors, cell-major (row, column), then size"""
    centers = (np.arange(arch.cells) + 0.5) * arch.stride
    rows = []
    for cy in centers:
        for cx in centers:
            for s in arch.anchor_sizes:
                rows.append((cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2))
    return np.array(rows, dtype=np.float64)


def extract_features(grid: np.ndarray, arch: Architecture) -> np.ndarray:
    """(cells^2, feature_dim) pooled mean / std windows around every cell"""
    if grid.ndim != 2 or grid.shape != (arch.grid, arch.grid):
        raise ShapeError(f"model expects a {arch.grid}x{arch.grid} grid, got {grid.shape}")
    p = arch.pool
    n = arch.grid // p
    blocks = grid.reshape(n, p, n, p)
    mean = blocks.mean(axis=(1, 3))
    std = np.sqrt(np.maximum((blocks * blocks).mean(axis=(1, 3)) - mean * mean, 0.0))
    channels = np.stack([mean, std])
    padded = np.pad(channels, ((0, 0), (arch.pad, arch.pad), (arch.pad, arch.pad)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (arch.window, arch.window), axis=(1, 2))
    step = arch.stride // p
    windows = windows[:, ::step, ::step][:, :arch.cells, :arch.cells]
    return windows.transpose(1, 2, 0, 3, 4).reshape(arch.cells * arch.cells, arch.feature_dim)


@dataclass(frozen=True, eq=False)
class ForwardPass:
    features: np.ndarray
    hidden: np.ndarray
    logits: dict      # head -> (num_anchors, classes)
    probs: dict       # head -> (num_anchors, classes)
    offsets: np.ndarray

    def scores(self) -> int:
        return sum(p.size for p in self.probs.values())


def forward(model: ToyModel, scene: Union[SyntheticScene, np.ndarray]) -> ForwardPass:
    arch = model.architecture
    grid = scene.grid if isinstance(scene, SyntheticScene) else scene
    x = extract_features(grid, arch)
    hidden = np.tanh(x @ model.params[SHARED]['W'] + model.params[SHARED]['b'])

    logits, probs = {}, {}
    for head, k in arch.heads.items():
        z = (hidden @ model.params[head]['W'] + model.params[head]['b']).reshape(arch.num_anchors, k)
        logits[head] = z
        probs[head] = sigmoid(z)
    reg = model.params[REGRESSION]
    offsets = (hidden @ reg['W'] + reg['b']).reshape(arch.num_anchors, 4)
    return ForwardPass(x, hidden, logits, probs, offsets)


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

def greedy_nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float = NMS_IOU) -> list[int]:
    """Indices kept by greedy suppression, highest score first"""
    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    order = np.argsort(-scores, kind='stable')

    keep = []
    while order.size > 0:
        i = order[0]
        keep.append(int(i))
        xx1 = np.maximum(x1[i], x1[order[1:]])
        yy1 = np.maximum(y1[i], y1[order[1:]])
        xx2 = np.minimum(x2[i], x2[order[1:]])
        yy2 = np.minimum(y2[i], y2[order[1:]])
        inter = np.maximum(0.0, xx2 - xx1) * np.maximum(0.0, yy2 - yy1)
        ovr = inter / (areas[i] + areas[order[1:]] - inter)
        order = order[np.where(ovr <= iou_threshold)[0] + 1]
    return keep


def predict_boxes(model: ToyModel, scene: SyntheticScene, score_threshold: float,
                  nms_iou: float = NMS_IOU) -> list[Detection]:
    """Decode, threshold and suppress per class; never suppresses across classes"""
    arch = model.architecture
    out = forward(model, scene)
    decoded = np.clip(decode_offsets(anchor_boxes(arch), out.offsets), 0.0, float(arch.grid))
    valid = (decoded[:, 2] > decoded[:, 0]) & (decoded[:, 3] > decoded[:, 1])

    detections = []
    for head, probs in out.probs.items():
        for column in range(probs.shape[1]):
            scores = np.clip(probs[:, column], PROB_CLAMP, 1.0 - PROB_CLAMP)
            idx = np.flatnonzero((scores >= score_threshold) & valid)
            if idx.size == 0:
                continue
            label = head_label(head, column)
            for k in greedy_nms(decoded[idx], scores[idx], nms_iou):
                i = idx[k]
                detections.append(Detection(Box.from_seq(decoded[i]), float(scores[i]), label))
    return detections


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: ToyModel, path: str) -> None:
    payload = {
        'schema': CHECKPOINT_SCHEMA_VERSION,
        'architecture': model.architecture.to_json(),
        'params': {b: {n: v.tolist() for n, v in arrays.items()} for b, arrays in model.params.items()},
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write('\n')
    logger.info(f"Saved checkpoint to {path}")


def load_checkpoint(path: str) -> ToyModel:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno}", e.msg) from None
    except UnicodeDecodeError as e:
        raise ParseError(os.path.basename(path), f"not valid UTF-8 (byte offset {e.start})") from None
    if not isinstance(payload, dict):
        raise ParseError(os.path.basename(path), "checkpoint must be a JSON object")
    if payload.get('schema') != CHECKPOINT_SCHEMA_VERSION:
        raise ParseError(os.path.basename(path), f"unsupported checkpoint schema {payload.get('schema')!r}")
    try:
        arch = Architecture.from_json(payload['architecture'])
        params = {b: {n: np.array(v, dtype=np.float64) for n, v in arrays.items()}
                  for b, arrays in payload['params'].items()}
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(os.path.basename(path), f"malformed checkpoint: {e}") from None
    return ToyModel(arch, params)
