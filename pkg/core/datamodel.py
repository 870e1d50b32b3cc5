"""
Annotation data model, canonical file I/O and the dataset-construction
steps used for multi-task training (pseudo-label fusion, label specs,
class weighting, artifact subsets).
"""
import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Iterable, Optional, Sequence, Union

from config.config import ARTIFACT_PRIORITY, SCHEMA_VERSION
from core.errors import AlignmentError, ConfigError, InvariantError, ParseError
from core.geometry import Box, ImageSize

logger = logging.getLogger('polyplab')


class ArtifactClass(IntEnum):
    """Endoscopic artifact classes with their stable integer codes"""
    BLUR = 0
    BUBBLES = 1
    CONTRAST = 2
    SPECULARITY = 3
    SATURATION = 4
    MISC = 5
    INSTRUMENT = 6  # ingestible, never analysed

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: Union[str, int]) -> 'ArtifactClass':
        """Accept a code (0-6) or a class name such as 'blur' or 'Misc'"""
        if isinstance(text, int) and not isinstance(text, bool):
            return cls(text)
        token = str(text).strip().lower()
        if token.isdigit():
            return cls(int(token))
        aliases = {'miscellaneous': 'misc', 'bubble': 'bubbles', 'instruments': 'instrument',
                   'specular': 'specularity'}
        token = aliases.get(token, token)
        try:
            return cls[token.upper()]
        except KeyError:
            raise ValueError(f"unknown artifact class '{text}'") from None


ANALYSIS_CLASSES = tuple(c for c in ArtifactClass if c != ArtifactClass.INSTRUMENT)


class PolypLabel(Enum):
    POLYP = 'polyp'

    @property
    def key(self) -> str:
        return self.value


Label = Union[PolypLabel, ArtifactClass]


class LabelMode(Enum):
    TWO_HEAD = 'two_head'
    FLAT = 'flat'


@dataclass(frozen=True)
class Detection:
    """A scored, labelled box (model prediction or pseudo-label)"""
    box: Box
    score: float
    label: Label

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise InvariantError(f"score must lie in [0, 1], got {self.score}")

    @property
    def is_artifact(self) -> bool:
        return isinstance(self.label, ArtifactClass)


@dataclass(frozen=True)
class FrameRecord:
    """One frame: ground-truth polyps, predicted polyps and artifact boxes"""
    frame_id: str
    image: ImageSize
    gt_polyps: tuple[Box, ...] = ()
    pred_polyps: tuple[Detection, ...] = ()
    artifacts: tuple[Detection, ...] = ()

    def __post_init__(self):
        for det in self.pred_polyps:
            if det.label != PolypLabel.POLYP:
                raise InvariantError(f"frame {self.frame_id}: predicted polyp carries label {det.label}")
        for det in self.artifacts:
            if not det.is_artifact:
                raise InvariantError(f"frame {self.frame_id}: artifact carries label {det.label}")

    def artifacts_of(self, cls: ArtifactClass, min_score: float = 0.0) -> list[Box]:
        return [a.box for a in self.artifacts if a.label == cls and a.score >= min_score]


@dataclass(frozen=True)
class Dataset:
    """Ordered, id-unique collection of frames"""
    name: str
    frames: tuple[FrameRecord, ...] = ()
    notes: str = ''
    label_mode: Optional[LabelMode] = None

    def __post_init__(self):
        seen = set()
        for frame in self.frames:
            if frame.frame_id in seen:
                raise InvariantError(f"duplicate frame_id '{frame.frame_id}' in dataset '{self.name}'")
            seen.add(frame.frame_id)

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    @property
    def frame_ids(self) -> list[str]:
        return [f.frame_id for f in self.frames]

    def get(self, frame_id: str) -> Optional[FrameRecord]:
        for frame in self.frames:
            if frame.frame_id == frame_id:
                return frame
        return None


@dataclass(frozen=True)
class MultiTaskLabelSpec:
    """How a fused dataset is turned into training labels"""
    mode: LabelMode = LabelMode.TWO_HEAD
    artifact_threshold: float = 0.0
    included_artifacts: frozenset = field(default_factory=lambda: frozenset(ANALYSIS_CLASSES))
    class_weights: Optional[dict] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (0.0 <= self.artifact_threshold <= 1.0):
            raise ConfigError(f"artifact_threshold must lie in [0, 1], got {self.artifact_threshold}")
        if not self.included_artifacts:
            raise ConfigError("included_artifacts must name at least one artifact class")
        if ArtifactClass.INSTRUMENT in self.included_artifacts:
            raise ConfigError("instrument is not an analysis class and cannot be included")
        if self.class_weights is not None:
            total = math.fsum(self.class_weights.values())
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"class weights must sum to 1, got {total!r}")
            if any(w < 0 or w > 1 for w in self.class_weights.values()):
                raise ConfigError("class weights must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------

def _num(value: float):
    """Write integral floats as JSON integers"""
    if isinstance(value, float) and value.is_integer() and abs(value) < 2 ** 53:
        return int(value)
    return value


def _box_json(box: Box) -> list:
    return [_num(c) for c in box.as_tuple()]


def dataset_to_json(d: Dataset) -> dict:
    frames = []
    for f in d.frames:
        frames.append({
            'frame_id': f.frame_id,
            'width': f.image.width,
            'height': f.image.height,
            'gt_polyps': [_box_json(b) for b in f.gt_polyps],
            'pred_polyps': [{'box': _box_json(p.box), 'score': _num(p.score)} for p in f.pred_polyps],
            'artifacts': [
                {'box': _box_json(a.box), 'score': _num(a.score), 'class': int(a.label)}
                for a in f.artifacts
            ],
        })
    return {
        'schema': SCHEMA_VERSION,
        'name': d.name,
        'notes': d.notes,
        'label_mode': d.label_mode.value if d.label_mode else None,
        'frames': frames,
    }


def dumps_dataset(d: Dataset) -> str:
    return json.dumps(dataset_to_json(d), sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def save_dataset(d: Dataset, path: str) -> None:
    """Write the canonical JSON form; byte-stable for equal datasets"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dumps_dataset(d))
    logger.info(f"Saved dataset '{d.name}' ({len(d)} frames) to {path}")


def _parse_box(raw, locus: str) -> Box:
    if not isinstance(raw, list) or len(raw) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw):
        raise ParseError(locus, f"box must be a list of 4 numbers, got {raw!r}")
    try:
        return Box.from_seq(raw)
    except InvariantError as e:
        raise InvariantError(f"{locus}: {e}") from None


def _parse_score(raw, locus: str) -> float:
    if not isinstance(raw, (int, float)) or isinstance(raw, bool):
        raise ParseError(locus, f"score must be a number, got {raw!r}")
    return float(raw)


def _detection(box: Box, score: float, label: Label, locus: str) -> Detection:
    try:
        return Detection(box, score, label)
    except InvariantError as e:
        raise InvariantError(f"{locus}: {e}") from None


def _list_field(raw: dict, key: str, locus: str) -> list:
    value = raw.get(key, [])
    if not isinstance(value, list):
        raise ParseError(f"{locus} {key}", f"must be a list, got {type(value).__name__}")
    return value


def _frame_from_json(raw: dict, locus: str) -> FrameRecord:
    if not isinstance(raw, dict):
        raise ParseError(locus, "frame must be an object")
    for key in ('frame_id', 'width', 'height'):
        if key not in raw:
            raise ParseError(locus, f"missing key '{key}'")
    if not isinstance(raw['frame_id'], str):
        raise ParseError(locus, "frame_id must be a string")
    locus = f"{locus} ({raw['frame_id']})"
    try:
        image = ImageSize(raw['width'], raw['height'])
    except InvariantError as e:
        raise InvariantError(f"{locus}: {e}") from None

    gt = tuple(_parse_box(b, f"{locus} gt_polyps[{i}]")
               for i, b in enumerate(_list_field(raw, 'gt_polyps', locus)))

    preds = []
    for i, p in enumerate(_list_field(raw, 'pred_polyps', locus)):
        where = f"{locus} pred_polyps[{i}]"
        if not isinstance(p, dict) or 'box' not in p or 'score' not in p:
            raise ParseError(where, "prediction needs 'box' and 'score'")
        preds.append(_detection(_parse_box(p['box'], where), _parse_score(p['score'], where),
                                PolypLabel.POLYP, where))

    artifacts = []
    for i, a in enumerate(_list_field(raw, 'artifacts', locus)):
        where = f"{locus} artifacts[{i}]"
        if not isinstance(a, dict) or not {'box', 'score', 'class'} <= a.keys():
            raise ParseError(where, "artifact needs 'box', 'score' and 'class'")
        try:
            cls = ArtifactClass(a['class'])
        except (ValueError, TypeError):
            raise ParseError(where, f"class must be an integer code 0-6, got {a['class']!r}") from None
        artifacts.append(_detection(_parse_box(a['box'], where), _parse_score(a['score'], where), cls, where))

    return FrameRecord(raw['frame_id'], image, gt, tuple(preds), tuple(artifacts))


def dataset_from_json(payload, source: str = '<memory>') -> Dataset:
    if not isinstance(payload, dict):
        raise ParseError(source, "top level must be an object")
    if payload.get('schema') != SCHEMA_VERSION:
        raise ParseError(source, f"unsupported schema {payload.get('schema')!r} (expected {SCHEMA_VERSION})")
    if not isinstance(payload.get('frames', []), list):
        raise ParseError(source, "'frames' must be a list")
    frames = tuple(_frame_from_json(f, f"record {i}") for i, f in enumerate(payload.get('frames', [])))
    mode = payload.get('label_mode')
    try:
        label_mode = LabelMode(mode) if mode is not None else None
    except ValueError:
        raise ParseError(source, f"unknown label_mode {mode!r}") from None
    try:
        return Dataset(str(payload.get('name', '')), frames, str(payload.get('notes', '')), label_mode)
    except InvariantError as e:
        raise InvariantError(f"{source}: {e}") from None


# ---------------------------------------------------------------------------
# CSV import
# ---------------------------------------------------------------------------

CSV_COLUMNS = ('frame_id', 'label', 'score', 'x_min', 'y_min', 'x_max', 'y_max')


def _load_csv(path: str, image_size: Optional[ImageSize]) -> Dataset:
    order: list[str] = []
    sizes: dict[str, ImageSize] = {}
    rows: dict[str, dict[str, list]] = {}

    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ParseError('line 1', f"missing columns: {', '.join(missing)}")
        has_size = 'width' in header and 'height' in header

        for row in reader:
            locus = f"line {reader.line_num}"
            frame_id = (row['frame_id'] or '').strip()
            if not frame_id:
                raise ParseError(locus, "empty frame_id")
            if frame_id not in rows:
                order.append(frame_id)
                rows[frame_id] = {'gt': [], 'pred': [], 'art': []}

            if has_size and row.get('width') and row.get('height'):
                try:
                    size = ImageSize(int(row['width']), int(row['height']))
                except ValueError as e:
                    raise ParseError(locus, f"bad image size: {e}") from None
                if frame_id in sizes and sizes[frame_id] != size:
                    raise InvariantError(f"{locus}: frame '{frame_id}' has conflicting image sizes")
                sizes[frame_id] = size

            label = (row['label'] or '').strip().lower()
            if label in ('', 'none'):
                continue

            try:
                coords = [float(row[c]) for c in ('x_min', 'y_min', 'x_max', 'y_max')]
            except (TypeError, ValueError):
                raise ParseError(locus, "coordinates must be numbers") from None
            try:
                box = Box.from_seq(coords)
            except InvariantError as e:
                raise InvariantError(f"{locus}: {e}") from None

            if label == 'gt':
                rows[frame_id]['gt'].append(box)
                continue

            try:
                score = float(row['score'])
            except (TypeError, ValueError):
                raise ParseError(locus, f"score must be a number, got {row['score']!r}") from None

            if label == 'polyp':
                rows[frame_id]['pred'].append(_detection(box, score, PolypLabel.POLYP, locus))
            else:
                try:
                    cls = ArtifactClass.parse(label)
                except ValueError as e:
                    raise ParseError(locus, str(e)) from None
                rows[frame_id]['art'].append(_detection(box, score, cls, locus))

    frames = []
    for frame_id in order:
        size = sizes.get(frame_id, image_size)
        if size is None:
            raise ParseError(f"frame {frame_id}", "no width/height column and no image size given")
        r = rows[frame_id]
        frames.append(FrameRecord(frame_id, size, tuple(r['gt']), tuple(r['pred']), tuple(r['art'])))
    return Dataset(os.path.splitext(os.path.basename(path))[0], tuple(frames), f"imported from {os.path.basename(path)}")


def load_dataset(path: str, fmt: Optional[str] = None, image_size: Optional[ImageSize] = None) -> Dataset:
    """Load a dataset from canonical JSON or flat CSV (format inferred from the extension)"""
    if fmt is None:
        fmt = 'csv' if path.lower().endswith('.csv') else 'canonical-json'
    if fmt not in ('csv', 'canonical-json', 'json'):
        raise ConfigError(f"unknown dataset format '{fmt}'")
    try:
        if fmt == 'csv':
            d = _load_csv(path, image_size)
        else:
            with open(path, 'r', encoding='utf-8') as f:
                try:
                    payload = json.load(f)
                except json.JSONDecodeError as e:
                    raise ParseError(f"line {e.lineno}", e.msg) from None
            d = dataset_from_json(payload, os.path.basename(path))
    except UnicodeDecodeError as e:
        raise ParseError(os.path.basename(path), f"not valid UTF-8 (byte offset {e.start})") from None

    logger.info(f"Loaded dataset '{d.name}' with {len(d)} frames from {path}")
    return d


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------

def merge_pseudo_labels(polyp_ds: Dataset, artifact_ds: Dataset, threshold: float) -> Dataset:
    """Promote artifact detections scoring >= threshold to ground truth on the polyp dataset.

    Existing artifact annotations are replaced. Frames the artifact detector
    did not report on receive no artifacts.
    """
    if not (0.0 <= threshold <= 1.0):
        raise ConfigError(f"threshold must lie in [0, 1], got {threshold}")

    polyp_ids = set(polyp_ds.frame_ids)
    for frame_id in artifact_ds.frame_ids:
        if frame_id not in polyp_ids:
            raise AlignmentError(frame_id, f"frame '{frame_id}' of '{artifact_ds.name}' is not in '{polyp_ds.name}'")

    by_id = {f.frame_id: f for f in artifact_ds.frames}
    frames = []
    for frame in polyp_ds.frames:
        source = by_id.get(frame.frame_id)
        kept = ()
        if source is not None:
            kept = tuple(a for a in source.artifacts if a.score >= threshold)
        frames.append(replace(frame, artifacts=kept))

    fused = Dataset(
        polyp_ds.name,
        tuple(frames),
        f"artifacts pseudo-labelled from '{artifact_ds.name}' at threshold {threshold:g}",
        polyp_ds.label_mode,
    )
    logger.info(f"Fused {len(fused)} frames at threshold {threshold:g}: "
                f"{artifacts_per_image(fused):.2f} artifacts per image")
    return fused


def apply_label_spec(d: Dataset, spec: MultiTaskLabelSpec) -> Dataset:
    """Restrict artifacts to the spec's classes and threshold and tag the label mode"""
    spec.validate()
    frames = []
    dropped_instruments = 0
    for frame in d.frames:
        kept = []
        for a in frame.artifacts:
            if a.label == ArtifactClass.INSTRUMENT:
                dropped_instruments += 1
                continue
            if a.label in spec.included_artifacts and a.score >= spec.artifact_threshold:
                kept.append(a)
        frames.append(replace(frame, artifacts=tuple(kept)))
    if dropped_instruments:
        logger.warning(f"Dropped {dropped_instruments} instrument boxes from '{d.name}'")
    return replace(d, frames=tuple(frames), label_mode=spec.mode)


def class_weighting(polyp_share: Optional[float],
                    artifact_classes: Union[int, Sequence[ArtifactClass]] = ANALYSIS_CLASSES) -> dict:
    """Class weight map: the polyp class takes polyp_share, artifacts split the rest equally.

    With polyp_share None every label gets the same weight.
    """
    if isinstance(artifact_classes, int):
        if not 1 <= artifact_classes <= len(ANALYSIS_CLASSES):
            raise ConfigError(f"need 1-{len(ANALYSIS_CLASSES)} artifact classes, got {artifact_classes}")
        artifact_classes = ANALYSIS_CLASSES[:artifact_classes]
    artifact_classes = list(dict.fromkeys(artifact_classes))
    if not artifact_classes:
        raise ConfigError("need at least one artifact class")

    if polyp_share is None:
        uniform = 1.0 / (len(artifact_classes) + 1)
        weights = {PolypLabel.POLYP: uniform}
        weights.update({c: uniform for c in artifact_classes})
        return weights

    if not (0.0 < polyp_share < 1.0):
        raise ConfigError(f"polyp share must lie strictly between 0 and 1, got {polyp_share}")
    share = (1.0 - polyp_share) / len(artifact_classes)
    weights = {PolypLabel.POLYP: polyp_share}
    weights.update({c: share for c in artifact_classes})
    return weights


def artifacts_per_image(d: Dataset) -> float:
    if not d.frames:
        return 0.0
    return sum(len(f.artifacts) for f in d.frames) / len(d.frames)


def threshold_sweep(polyp_ds: Dataset, artifact_ds: Dataset, thresholds: Iterable[float]) -> list[tuple[float, float]]:
    """Artifacts per image of the fused dataset at each pseudo-label threshold"""
    return [(t, artifacts_per_image(merge_pseudo_labels(polyp_ds, artifact_ds, t))) for t in sorted(thresholds)]


def nested_artifact_subsets(priority: Sequence[str] = ARTIFACT_PRIORITY) -> list[frozenset]:
    """Growing artifact subsets: the most influential class, then the top two, ..."""
    classes = [ArtifactClass.parse(name) for name in priority]
    return [frozenset(classes[:i + 1]) for i in range(len(classes))]
