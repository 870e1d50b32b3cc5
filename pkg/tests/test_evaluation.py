import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.datamodel import load_dataset
from core.errors import ModeMixError
from core.evaluation import MatchMode, Metrics, evaluate_dataset, f_beta, match_frame, metrics
from core.geometry import Box, centroid_inside
from tests.conftest import polyp


def small_boxes():
    return st.builds(lambda x, y, w, h: Box(x, y, x + w, y + h),
                     st.integers(0, 20), st.integers(0, 20), st.integers(1, 12), st.integers(1, 12))


def strict_oracle(gt, dets, threshold):
    """Exhaustive search over ranking-consistent orders; every order must give the same greedy counts"""
    survivors = [d for d in dets if d.score >= threshold]
    results = set()
    groups = [list(g) for _, g in itertools.groupby(sorted(survivors, key=lambda d: -d.score), key=lambda d: d.score)]
    for perms in itertools.product(*[itertools.permutations(g) for g in groups]):
        order = [d for p in perms for d in p]
        matched = [False] * len(gt)
        tp = 0
        for d in order:
            for g, box in enumerate(gt):
                if not matched[g] and centroid_inside(d.box, box):
                    matched[g] = True
                    tp += 1
                    break
        results.add(tp)
    return results


class TestMatchFrame:
    def test_no_detections(self):
        gt = [Box(0, 0, 10, 10), Box(20, 20, 30, 30)]
        outcome = match_frame(gt, [], 0.5)
        assert outcome.tp_count == 0 and outcome.fp == () and outcome.fn == (0, 1)

    def test_duplicates_strict_vs_analysis(self):
        gt = [Box(0, 0, 20, 20)]
        dets = [polyp(5, 5, 15, 15, 0.9), polyp(6, 6, 14, 14, 0.8)]
        strict = match_frame(gt, dets, 0.5, MatchMode.STRICT)
        assert strict.tp_count == 1 and len(strict.fp) == 1 and strict.fn == ()
        assert strict.tp_pairs == ((0, 0),) and strict.fp == (1,)
        analysis = match_frame(gt, dets, 0.5, MatchMode.ANALYSIS)
        assert analysis.tp_count == 2 and analysis.fp == () and analysis.fn == ()

    def test_threshold_discards(self):
        outcome = match_frame([Box(0, 0, 10, 10)], [polyp(0, 0, 10, 10, 0.49)], 0.5)
        assert outcome.tp_count == 0 and outcome.fp == () and outcome.fn == (0,)

    def test_higher_score_matches_first(self):
        gt = [Box(0, 0, 20, 20)]
        dets = [polyp(5, 5, 15, 15, 0.6), polyp(6, 6, 14, 14, 0.9)]
        assert match_frame(gt, dets, 0.5).tp_pairs == ((1, 0),)

    def test_first_unmatched_gt_in_input_order(self):
        gt = [Box(0, 0, 20, 20), Box(5, 5, 25, 25)]
        dets = [polyp(8, 8, 12, 12, 0.9), polyp(9, 9, 11, 11, 0.8)]
        assert match_frame(gt, dets, 0.5).tp_pairs == ((0, 0), (1, 1))

    @settings(max_examples=500, deadline=None)
    @given(st.lists(small_boxes(), max_size=6),
           st.lists(st.tuples(small_boxes(), st.sampled_from([0.3, 0.6, 0.9])), max_size=6))
    def test_strict_contract(self, gt, raw):
        dets = [polyp(*b.as_tuple(), s) for b, s in raw]
        outcome = match_frame(gt, dets, 0.5, MatchMode.STRICT)
        kept = sum(1 for d in dets if d.score >= 0.5)
        assert outcome.tp_count + len(outcome.fn) == len(gt)
        assert outcome.tp_count + len(outcome.fp) == kept
        assert len({g for _, g in outcome.tp_pairs}) == outcome.tp_count
        assert outcome.tp_count in strict_oracle(gt, dets, 0.5)


class TestMetrics:
    def test_formula(self):
        m = Metrics.from_counts(3, 1, 2)
        assert m.precision == pytest.approx(0.75)
        assert m.recall == pytest.approx(0.6)
        assert m.f1 == pytest.approx(0.666667, abs=1e-6)
        assert m.f2 == pytest.approx(0.625)

    def test_perfect(self):
        m = Metrics.from_counts(4, 0, 0)
        assert m.f1 == 1.0 and m.f2 == 1.0

    def test_zero_denominators(self):
        m = Metrics.from_counts(0, 0, 0)
        assert (m.precision, m.recall, m.f1, m.f2) == (0.0, 0.0, 0.0, 0.0)

    def test_reported_baseline_scores(self):
        assert f_beta(0.849, 0.814, 1.0) == pytest.approx(0.829, abs=0.005)
        assert f_beta(0.849, 0.814, 2.0) == pytest.approx(0.820, abs=0.005)

    def test_mode_mix(self):
        gt = [Box(0, 0, 10, 10)]
        with pytest.raises(ModeMixError):
            metrics([match_frame(gt, [], 0.5, MatchMode.STRICT), match_frame(gt, [], 0.5, MatchMode.ANALYSIS)])

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_f1_between_precision_and_recall(self, tp, fp, fn):
        m = Metrics.from_counts(tp, fp, fn)
        if m.precision > 0 and m.recall > 0:
            lo, hi = sorted((m.precision, m.recall))
            assert lo - 1e-12 <= m.f1 <= hi + 1e-12


class TestGoldenFixture:
    def test_strict(self, golden_path):
        m = evaluate_dataset(load_dataset(golden_path).frames, 0.5, MatchMode.STRICT)
        assert (m.tp, m.fp, m.fn) == (2, 3, 1)
        assert m.precision == pytest.approx(0.4)
        assert m.recall == pytest.approx(2 / 3)
        assert m.f1 == pytest.approx(0.5)
        assert m.f2 == pytest.approx(10 / 17)

    def test_analysis(self, golden_path):
        m = evaluate_dataset(load_dataset(golden_path).frames, 0.5, MatchMode.ANALYSIS)
        assert (m.tp, m.fp, m.fn) == (3, 2, 1)
        assert m.f1 == pytest.approx(2 / 3)

    def test_permutation_invariant(self, golden_path):
        frames = load_dataset(golden_path).frames
        assert evaluate_dataset(frames, 0.5) == evaluate_dataset(tuple(reversed(frames)), 0.5)
