import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import InvariantError
from core.geometry import (Box, ImageSize, boxes_to_array, centroid_inside, contains, iou, pairwise_iou,
                           union_area, union_area_fraction)


@st.composite
def int_boxes(draw, size=64):
    x0 = draw(st.integers(0, size - 1))
    y0 = draw(st.integers(0, size - 1))
    x1 = draw(st.integers(x0 + 1, size))
    y1 = draw(st.integers(y0 + 1, size))
    return Box(x0, y0, x1, y1)


def rasterize(boxes, size=64):
    mask = np.zeros((size, size), dtype=bool)
    for b in boxes:
        mask[int(b.y_min):int(b.y_max), int(b.x_min):int(b.x_max)] = True
    return mask


class TestBox:
    def test_rejects_degenerate(self):
        with pytest.raises(InvariantError):
            Box(0, 0, 0, 10)
        with pytest.raises(InvariantError):
            Box(5, 0, 1, 10)

    def test_rejects_non_finite(self):
        with pytest.raises(InvariantError):
            Box(0, 0, float('inf'), 10)

    def test_image_size_must_be_positive_integer(self):
        with pytest.raises(InvariantError):
            ImageSize(0, 10)
        with pytest.raises(InvariantError):
            ImageSize(10.5, 10)
        assert ImageSize(10.0, 20).area == 200

    def test_clip(self):
        img = ImageSize(100, 100)
        assert Box(90, 90, 110, 110).clip(img) == Box(90, 90, 100, 100)
        assert Box(100, 0, 120, 10).clip(img) is None


class TestIou:
    def test_identity(self):
        b = Box(3, 4, 17, 9)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0

    def test_partial_overlap(self):
        assert iou(Box(0, 0, 10, 10), Box(5, 5, 15, 15)) == pytest.approx(25 / 175, abs=1e-12)

    @given(int_boxes(), int_boxes())
    def test_symmetric(self, a, b):
        assert iou(a, b) == iou(b, a)

    @settings(max_examples=300)
    @given(int_boxes(), int_boxes())
    def test_matches_rasterization(self, a, b):
        ma, mb = rasterize([a]), rasterize([b])
        expected = (ma & mb).sum() / (ma | mb).sum()
        assert iou(a, b) == pytest.approx(expected, abs=1e-12)

    @given(int_boxes(), int_boxes())
    def test_one_only_for_equal_boxes(self, a, b):
        assert (iou(a, b) == 1.0) == (a.as_tuple() == b.as_tuple())

    @given(int_boxes(), int_boxes())
    def test_containment_ratio(self, a, b):
        if contains(a, b):
            assert iou(a, b) == pytest.approx(b.area / a.area, abs=1e-12)

    def test_pairwise_matches_scalar(self):
        boxes = [Box(0, 0, 10, 10), Box(5, 5, 15, 15), Box(20, 20, 30, 30)]
        arr = boxes_to_array(boxes)
        matrix = pairwise_iou(arr, arr)
        for i, a in enumerate(boxes):
            for j, b in enumerate(boxes):
                assert matrix[i, j] == pytest.approx(iou(a, b), abs=1e-12)

    def test_pairwise_empty(self):
        assert pairwise_iou(boxes_to_array([]), boxes_to_array([Box(0, 0, 1, 1)])).shape == (0, 1)


class TestPredicates:
    def test_centroid_inside(self):
        det = Box(0, 0, 10, 10)
        assert centroid_inside(det, det)
        assert centroid_inside(det, Box(4, 4, 20, 20))
        assert centroid_inside(det, Box(5, 5, 20, 20))
        assert not centroid_inside(det, Box(6, 6, 20, 20))

    def test_contains(self):
        outer = Box(0, 0, 100, 100)
        assert contains(outer, outer)
        assert contains(outer, Box(10, 10, 20, 20))
        assert not contains(outer, Box(90, 90, 110, 110))

    @given(int_boxes(), int_boxes())
    def test_contains_matches_pixel_inclusion(self, a, b):
        assert contains(a, b) == (not (rasterize([b]) & ~rasterize([a])).any())


class TestUnionArea:
    def test_examples(self):
        img = ImageSize(100, 100)
        assert union_area_fraction([], img) == 0.0
        assert union_area_fraction([Box(0, 0, 100, 100)], img) == 1.0
        assert union_area_fraction([Box(0, 0, 10, 10), Box(5, 5, 15, 15)], img) == pytest.approx(0.0175)

    def test_clips_before_union(self):
        img = ImageSize(10, 10)
        assert union_area_fraction([Box(-5, -5, 20, 20)], img) == 1.0

    def test_touching_boxes(self):
        assert union_area([Box(0, 0, 5, 5), Box(5, 0, 10, 5)]) == 50.0

    @settings(max_examples=1000, deadline=None)
    @given(st.lists(int_boxes(), min_size=0, max_size=6))
    def test_matches_rasterization(self, boxes):
        img = ImageSize(64, 64)
        expected = rasterize(boxes).sum() / img.area
        assert union_area_fraction(boxes, img) == expected

    @given(st.lists(int_boxes(), min_size=1, max_size=5), int_boxes())
    def test_monotone_and_duplicate_invariant(self, boxes, extra):
        img = ImageSize(64, 64)
        base = union_area_fraction(boxes, img)
        assert union_area_fraction(boxes + [extra], img) >= base
        assert union_area_fraction(boxes + boxes, img) == base
