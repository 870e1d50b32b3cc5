import math

import numpy as np
import pytest

from core.analysis import (ANY_ARTIFACT, PresenceRule, Relation, artifact_present, correlation_matrix,
                           coverage_by_class, presence_analysis, relation_analysis, relation_delta)
from core.datamodel import ANALYSIS_CLASSES, ArtifactClass, Dataset
from core.errors import ConfigError, TooFewFrames
from core.evaluation import MatchMode
from tests.conftest import artifact, frame, polyp


def with_blur(frame_id, **kwargs):
    return frame(frame_id, artifacts=[artifact('blur', 0, 0, 100, 60)], **kwargs)


def presence_fixture():
    # blur frames: 1 TP and 1 FN each; clean frames: 2 TP each
    hit, miss = (0, 0, 20, 20), (50, 50, 70, 70)
    return Dataset('presence', (
        with_blur('b1', gt=[hit, miss], preds=[polyp(5, 5, 15, 15, 0.9)]),
        with_blur('b2', gt=[hit, miss], preds=[polyp(5, 5, 15, 15, 0.9)]),
        frame('c1', gt=[hit, miss], preds=[polyp(5, 5, 15, 15, 0.9), polyp(55, 55, 65, 65, 0.9)]),
        frame('c2', gt=[hit, miss], preds=[polyp(5, 5, 15, 15, 0.9), polyp(55, 55, 65, 65, 0.9)]),
    ))


class TestArtifactPresent:
    def test_no_boxes(self):
        assert not artifact_present(frame('a'), ArtifactClass.BLUR, PresenceRule())

    def test_blur_sixty_percent(self):
        assert artifact_present(with_blur('a'), ArtifactClass.BLUR, PresenceRule())

    def test_overlapping_specularities_below_threshold(self):
        f = frame('a', artifacts=[artifact('specularity', 0, 0, 30, 10), artifact('specularity', 0, 0, 40, 10)])
        assert not artifact_present(f, ArtifactClass.SPECULARITY, PresenceRule())

    def test_zero_threshold_means_any_box(self):
        f = frame('a', artifacts=[artifact('contrast', 0, 0, 1, 1)])
        assert artifact_present(f, ArtifactClass.CONTRAST, PresenceRule())

    def test_score_filter(self):
        f = frame('a', artifacts=[artifact('contrast', 0, 0, 1, 1, 0.1)])
        assert not artifact_present(f, ArtifactClass.CONTRAST, PresenceRule(), min_score=0.25)

    def test_override_validation(self):
        with pytest.raises(ConfigError):
            PresenceRule().with_overrides({ArtifactClass.BLUR: 1.5})

    def test_frequency_monotone_in_threshold(self):
        d = Dataset('cov', tuple(frame(f"f{i}", artifacts=[artifact('blur', 0, 0, 10 * (i + 1), 100)])
                                 for i in range(10)))
        freqs = [presence_analysis(d, PresenceRule().with_overrides({ArtifactClass.BLUR: t}))
                 .row(ArtifactClass.BLUR).frequency for t in (0.0, 0.25, 0.5, 0.75)]
        assert freqs == sorted(freqs, reverse=True)


class TestPresenceAnalysis:
    def test_recall_difference(self):
        report = presence_analysis(presence_fixture())
        row = report.row(ArtifactClass.BLUR)
        assert row.frequency == 0.5
        assert (row.n_present, row.n_absent) == (2, 2)
        assert row.present.recall == 0.5 and row.absent.recall == 1.0
        assert row.differences['recall'] == pytest.approx(-50.0)
        assert row.differences['precision'] == pytest.approx(0.0)
        assert not row.degenerate

    def test_degenerate_split(self):
        report = presence_analysis(presence_fixture())
        row = report.row(ArtifactClass.BUBBLES)
        assert row.degenerate and row.frequency == 0.0
        assert all(math.isnan(v) for v in row.differences.values())

    def test_identical_splits(self):
        d = Dataset('same', (
            with_blur('a', gt=[(0, 0, 20, 20)], preds=[polyp(5, 5, 15, 15, 0.9)]),
            frame('b', gt=[(0, 0, 20, 20)], preds=[polyp(5, 5, 15, 15, 0.9)]),
        ))
        row = presence_analysis(d).row(ArtifactClass.BLUR)
        assert all(v == 0 for v in row.differences.values())

    def test_rows_cover_six_classes(self):
        report = presence_analysis(presence_fixture())
        assert [r.cls for r in report.rows] == list(ANALYSIS_CLASSES)
        assert report.n_frames == 4


class TestRelationAnalysis:
    def test_contains_but_not_overlaps(self):
        d = Dataset('rel', (frame('a', gt=[(0, 0, 100, 100)], artifacts=[artifact('bubbles', 10, 10, 20, 20)]),))
        contain = relation_analysis(d, Relation.CONTAINS)
        overlap = relation_analysis(d, Relation.OVERLAP)
        assert contain.shares['ground-truth']['bubbles'] == 1.0
        assert contain.shares['ground-truth'][ANY_ARTIFACT] == 1.0
        assert overlap.shares['ground-truth']['bubbles'] == 0.0
        assert contain.frequencies['ground-truth'] == 1

    def test_zero_artifacts(self):
        d = Dataset('none', (frame('a', gt=[(0, 0, 20, 20)], preds=[polyp(1, 1, 19, 19, 0.9)]),))
        report = relation_analysis(d, Relation.OVERLAP)
        assert all(v == 0.0 for shares in report.shares.values() for v in shares.values())

    def test_categories_use_analysis_matching(self):
        d = Dataset('dup', (frame('a', gt=[(0, 0, 20, 20), (50, 50, 60, 60)],
                                  preds=[polyp(0, 0, 20, 20, 0.9), polyp(1, 1, 19, 19, 0.8),
                                         polyp(80, 80, 90, 90, 0.7)],
                                  artifacts=[artifact('specularity', 0, 0, 20, 20)]),))
        report = relation_analysis(d, Relation.OVERLAP)
        assert report.frequencies == {'ground-truth': 2, 'TP': 2, 'FP': 1, 'FN': 1}
        assert report.shares['TP']['specularity'] == 1.0
        assert report.shares['ground-truth']['specularity'] == 0.5
        strict = relation_analysis(d, Relation.OVERLAP, mode=MatchMode.STRICT)
        assert strict.frequencies['TP'] == 1 and strict.frequencies['FP'] == 2

    def test_artifact_score_threshold(self):
        d = Dataset('low', (frame('a', gt=[(0, 0, 20, 20)], artifacts=[artifact('misc', 0, 0, 20, 20, 0.2)]),))
        assert relation_analysis(d, Relation.OVERLAP).shares['ground-truth']['misc'] == 0.0
        assert relation_analysis(d, Relation.OVERLAP, artifact_score_threshold=0.1) \
            .shares['ground-truth']['misc'] == 1.0

    def test_any_at_least_each_class(self):
        d = Dataset('mix', (
            frame('a', gt=[(0, 0, 40, 40)], artifacts=[artifact('blur', 1, 1, 5, 5), artifact('misc', 30, 30, 35, 35)]),
            frame('b', gt=[(0, 0, 40, 40)], artifacts=[artifact('misc', 2, 2, 4, 4)]),
            frame('c', gt=[(0, 0, 40, 40)]),
        ))
        report = relation_analysis(d, Relation.CONTAINS)
        for shares in report.shares.values():
            assert all(shares[ANY_ARTIFACT] >= shares[c.key] for c in ANALYSIS_CLASSES)
            assert all(0.0 <= v <= 1.0 for v in shares.values())

    def test_delta(self):
        before = Dataset('b', (frame('a', gt=[(0, 0, 100, 100)]),))
        after = Dataset('a', (frame('a', gt=[(0, 0, 100, 100)], artifacts=[artifact('blur', 1, 1, 2, 2)]),))
        delta = relation_delta(relation_analysis(before, Relation.CONTAINS),
                               relation_analysis(after, Relation.CONTAINS))
        assert delta.is_delta
        assert delta.shares['ground-truth']['blur'] == 1.0
        with pytest.raises(ConfigError):
            relation_delta(relation_analysis(before, Relation.CONTAINS), relation_analysis(before, Relation.OVERLAP))


class TestCorrelation:
    def indicator_dataset(self, blur, misc, contrast=None):
        frames = []
        for i, (b, m) in enumerate(zip(blur, misc)):
            arts = []
            if b:
                arts.append(artifact('blur', 0, 0, 100, 100))
            if m:
                arts.append(artifact('misc', 0, 0, 50, 50))
            if contrast is None or contrast[i]:
                arts.append(artifact('contrast', 0, 0, 1, 1))
            frames.append(frame(f"f{i}", artifacts=arts))
        return Dataset('corr', tuple(frames))

    def test_complementary(self):
        m = correlation_matrix(self.indicator_dataset([1, 0, 1, 0], [0, 1, 0, 1]))
        assert m.get(ArtifactClass.BLUR, ArtifactClass.MISC) == pytest.approx(-1.0)

    def test_orthogonal(self):
        m = correlation_matrix(self.indicator_dataset([1, 1, 0, 0], [1, 0, 1, 0]))
        assert m.get(ArtifactClass.BLUR, ArtifactClass.MISC) == pytest.approx(0.0, abs=1e-12)

    def test_constant_indicator(self):
        m = correlation_matrix(self.indicator_dataset([1, 1, 0, 0], [1, 0, 1, 0]))
        assert ArtifactClass.CONTRAST in m.undefined
        assert m.get(ArtifactClass.CONTRAST, ArtifactClass.CONTRAST) == 1.0
        assert math.isnan(m.get(ArtifactClass.CONTRAST, ArtifactClass.BLUR))

    def test_symmetric_and_bounded(self):
        m = correlation_matrix(self.indicator_dataset([1, 1, 0, 1, 0], [1, 0, 0, 1, 1], [1, 0, 1, 1, 0]))
        finite = np.nan_to_num(m.values)
        assert np.allclose(finite, finite.T, atol=1e-12)
        assert np.all(np.abs(finite) <= 1.0)

    def test_permutation_invariant(self):
        d = self.indicator_dataset([1, 1, 0, 1, 0], [1, 0, 0, 1, 1], [1, 0, 1, 1, 0])
        reversed_d = Dataset('rev', tuple(reversed(d.frames)))
        a, b = correlation_matrix(d).values, correlation_matrix(reversed_d).values
        assert np.allclose(np.nan_to_num(a), np.nan_to_num(b), atol=1e-12)

    def test_too_few_frames(self):
        with pytest.raises(TooFewFrames):
            correlation_matrix(Dataset('one', (frame('a'),)))


def test_coverage_by_class():
    d = Dataset('cov', (frame('a', artifacts=[artifact('blur', 0, 0, 50, 100)]), frame('b')))
    coverage = coverage_by_class(d)
    assert coverage[ArtifactClass.BLUR] == [0.5, 0.0]
    assert coverage[ArtifactClass.MISC] == [0.0, 0.0]
