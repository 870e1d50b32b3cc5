"""
Run files for the toy-detector commands.

A run file is a dotenv-style KEY=VALUE text file. Every key is optional;
missing keys take the defaults below.

    MODE=two_head
    STEPS=500
    LOSS_WEIGHTS=1:1:3       # reg:art:pol
    INCLUDED_ARTIFACTS=blur,specularity
"""
import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import dotenv_values

from config.config import (FOCAL_ALPHA, FOCAL_GAMMA, GRADCHECK_COORDS, GRID_SIZE, HIDDEN, INIT_SCALE)
from core.datamodel import ANALYSIS_CLASSES, ArtifactClass, LabelMode, class_weighting
from core.errors import ConfigError
from core.losses import FocalParams, LossConfig
from core.toy.model import Architecture
from core.toy.scenes import SceneKnobs
from core.toy.trainer import TrainConfig

logger = logging.getLogger('polyplab')

DEFAULTS = {
    'MODE': 'two_head',
    'STEPS': '500',
    'LEARNING_RATE': '0.01',
    'BATCH_SIZE': '8',
    'SEED': '0',
    'SCENES': '32',
    'SCENE_SEED': '0',
    'LOSS_WEIGHTS': '1:1:3',
    'FOCAL_GAMMA': str(FOCAL_GAMMA),
    'FOCAL_ALPHA': str(FOCAL_ALPHA),
    'REG_COEFF': '0',
    'POLYP_SHARE': '',
    'INCLUDED_ARTIFACTS': ','.join(c.key for c in ANALYSIS_CLASSES),
    'REGRESS_ARTIFACTS': 'true',
    'HIDDEN': str(HIDDEN),
    'GRID': str(GRID_SIZE),
    'INIT_SCALE': str(INIT_SCALE),
    'POLYPS': '1',
    'ARTIFACTS_PER_CLASS': '1',
    'SPECULARITY_INSIDE_POLYP': '0',
    'OVERLAP_POLYP': '0',
    'CONFUSABILITY': '0',
    'NOISE': '0.02',
    'GRADCHECK_COORDS': str(GRADCHECK_COORDS),
}


def _int(values: dict, key: str) -> int:
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got '{values[key]}'") from None


def _float(values: dict, key: str) -> float:
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got '{values[key]}'") from None


def _bool(values: dict, key: str) -> bool:
    token = values[key].strip().lower()
    if token in ('1', 'true', 'yes'):
        return True
    if token in ('0', 'false', 'no'):
        return False
    raise ConfigError(f"{key} must be true or false, got '{values[key]}'")


@dataclass(frozen=True)
class RunFile:
    """Resolved run-file settings"""
    values: dict
    source: str = '<defaults>'

    @property
    def mode(self) -> LabelMode:
        try:
            return LabelMode(self.values['MODE'].strip().lower())
        except ValueError:
            raise ConfigError(f"MODE must be two_head or flat, got '{self.values['MODE']}'") from None

    @property
    def task_weights(self) -> tuple[float, float, float]:
        parts = self.values['LOSS_WEIGHTS'].split(':')
        if len(parts) != 3:
            raise ConfigError(f"LOSS_WEIGHTS must look like reg:art:pol, got '{self.values['LOSS_WEIGHTS']}'")
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"LOSS_WEIGHTS must be numeric, got '{self.values['LOSS_WEIGHTS']}'") from None

    @property
    def included_artifacts(self) -> frozenset:
        try:
            classes = [ArtifactClass.parse(t) for t in self.values['INCLUDED_ARTIFACTS'].split(',') if t.strip()]
        except ValueError as e:
            raise ConfigError(f"INCLUDED_ARTIFACTS: {e}") from None
        return frozenset(classes)

    @property
    def scenes(self) -> int:
        count = _int(self.values, 'SCENES')
        if count < 1:
            raise ConfigError(f"SCENES must be >= 1, got {count}")
        return count

    @property
    def scene_seed(self) -> int:
        return _int(self.values, 'SCENE_SEED')

    @property
    def gradcheck_coords(self) -> int:
        return _int(self.values, 'GRADCHECK_COORDS')

    @property
    def init_scale(self) -> float:
        return _float(self.values, 'INIT_SCALE')

    def class_weights(self) -> Optional[dict]:
        share = self.values['POLYP_SHARE'].strip().lower()
        if not share:
            return None
        classes = sorted(self.included_artifacts)
        if share == 'uniform':
            return class_weighting(None, classes)
        return class_weighting(_float(self.values, 'POLYP_SHARE'), classes)

    def loss_config(self) -> LossConfig:
        focal = FocalParams(_float(self.values, 'FOCAL_GAMMA'), _float(self.values, 'FOCAL_ALPHA'))
        return LossConfig(focal, self.task_weights, self.class_weights(), _float(self.values, 'REG_COEFF'))

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.loss_config(),
            steps=_int(self.values, 'STEPS'),
            learning_rate=_float(self.values, 'LEARNING_RATE'),
            batch_size=_int(self.values, 'BATCH_SIZE'),
            seed=_int(self.values, 'SEED'),
            mode=self.mode,
            included_artifacts=self.included_artifacts,
            regress_artifacts=_bool(self.values, 'REGRESS_ARTIFACTS'),
        )

    def architecture(self) -> Architecture:
        return Architecture(grid=_int(self.values, 'GRID'), hidden=_int(self.values, 'HIDDEN'), mode=self.mode)

    def scene_knobs(self) -> SceneKnobs:
        return SceneKnobs(
            size=_int(self.values, 'GRID'),
            polyps=_int(self.values, 'POLYPS'),
            artifacts_per_class=_int(self.values, 'ARTIFACTS_PER_CLASS'),
            specularity_inside_polyp=_float(self.values, 'SPECULARITY_INSIDE_POLYP'),
            overlap_polyp=_float(self.values, 'OVERLAP_POLYP'),
            confusability=_float(self.values, 'CONFUSABILITY'),
            noise=_float(self.values, 'NOISE'),
        )

    def resolved(self) -> dict:
        """Every setting, for the run manifest"""
        return dict(sorted(self.values.items()))


def parse_run_values(raw: dict, source: str = '<memory>') -> RunFile:
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"{source}: unknown run-file key {unknown[0]}")
    values = dict(DEFAULTS)
    for key, value in raw.items():
        if value is None:
            raise ConfigError(f"{source}: {key} has no value")
        values[key] = value.strip()
    return RunFile(values, source)


def load_run_file(path: str) -> RunFile:
    if not os.path.exists(path):
        raise ConfigError(f"run file not found: {path}")
    try:
        raw = dotenv_values(path, encoding='utf-8')
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: not valid UTF-8 (byte offset {e.start})") from None
    run = parse_run_values(raw, os.path.basename(path))
    # fail before any work starts
    run.train_config()
    run.architecture()
    run.scene_knobs()
    logger.info(f"Loaded run file {path}")
    return run
