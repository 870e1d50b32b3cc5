"""Toy detector -> pseudo-labels -> fused dataset -> retraining"""
import pytest

from core.datamodel import artifacts_per_image, dumps_dataset, load_dataset, merge_pseudo_labels, save_dataset
from core.losses import LossConfig
from core.toy.model import Architecture, ToyModel, predict_boxes
from core.toy.scenes import annotate_scenes, generate_scenes, scenes_to_dataset
from core.toy.trainer import TrainConfig, evaluate_loss, train


@pytest.fixture(scope='module')
def scenes():
    return generate_scenes(6, base_seed=20)


@pytest.fixture(scope='module')
def pseudo(scenes):
    detector = ToyModel.initialize(Architecture(), seed=4)
    detections = [predict_boxes(detector, s, score_threshold=0.05) for s in scenes]
    return scenes_to_dataset(scenes, 'artifact-detector', detections)


def test_fewer_artifacts_at_higher_thresholds(scenes, pseudo):
    polyps = scenes_to_dataset(scenes, 'polyps')
    per_image = [artifacts_per_image(merge_pseudo_labels(polyps, pseudo, t)) for t in (0.2, 0.5, 0.8)]
    assert per_image == sorted(per_image, reverse=True)
    assert per_image[0] > per_image[-1]


def test_fused_dataset_round_trips(tmp_path, scenes, pseudo):
    fused = merge_pseudo_labels(scenes_to_dataset(scenes, 'polyps'), pseudo, 0.5)
    path = tmp_path / 'fused.json'
    save_dataset(fused, str(path))
    assert dumps_dataset(load_dataset(str(path))) == dumps_dataset(fused)
    assert [f.gt_polyps for f in fused.frames] == [s.gt_polyps for s in scenes]


def test_training_on_pseudo_labels(scenes, pseudo):
    fused = merge_pseudo_labels(scenes_to_dataset(scenes, 'polyps'), pseudo, 0.5)
    annotated = annotate_scenes(scenes, fused)
    assert all(a.grid is s.grid for a, s in zip(annotated, scenes))

    model = ToyModel.initialize(Architecture(), seed=0)
    cfg = TrainConfig(loss=LossConfig(task_weights=(1, 1, 3)), steps=40, batch_size=3)
    initial = evaluate_loss(model, annotated, cfg.loss).total
    trained, trace = train(model, annotated, cfg)
    assert len(trace) == 40
    assert evaluate_loss(trained, annotated, cfg.loss).total < initial
