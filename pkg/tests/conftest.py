import logging
import os

import pytest

from core.datamodel import ArtifactClass, Dataset, Detection, FrameRecord, PolypLabel
from core.geometry import Box, ImageSize

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data')


def polyp(x0, y0, x1, y1, score):
    return Detection(Box(x0, y0, x1, y1), score, PolypLabel.POLYP)


def artifact(cls, x0, y0, x1, y1, score=1.0):
    return Detection(Box(x0, y0, x1, y1), score, ArtifactClass.parse(cls))


def frame(frame_id, gt=(), preds=(), artifacts=(), size=100):
    return FrameRecord(frame_id, ImageSize(size, size), tuple(Box(*b) for b in gt), tuple(preds), tuple(artifacts))


@pytest.fixture
def golden_path():
    return os.path.join(DATA_DIR, 'golden_eval.json')


@pytest.fixture
def run_file_path():
    return os.path.join(DATA_DIR, 'toy_run.env')


@pytest.fixture
def empty_dataset():
    return Dataset('empty')


@pytest.fixture(autouse=True)
def quiet_logs(caplog):
    caplog.set_level(logging.INFO, logger='polyplab')
