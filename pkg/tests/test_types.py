import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roitok.types import (
    FULL_PAGE,
    GLOBAL_REGION_ID,
    BBox,
    FeatureMap,
    FeaturePyramid,
    PoolingConfig,
    RoI,
    RoiClass,
    RoiSet,
    finalize_roi_set,
    reading_order,
    row_tolerance,
)

from conftest import random_regions


def text(i, x1, y1, x2, y2):
    return RoI(i, BBox(x1, y1, x2, y2), RoiClass.TEXT)


class TestBBox:
    @pytest.mark.parametrize("coords", [
        (0.2, 0.1, 0.2, 0.5),  # zero width
        (0.1, 0.3, 0.5, 0.3),  # zero height
        (0.5, 0.1, 0.2, 0.4),  # inverted
        (-0.1, 0.0, 0.5, 0.5),
        (0.0, 0.0, 1.01, 0.5),
        (0.0, float("nan"), 0.5, 0.5),
    ])
    def test_rejects_invalid(self, coords):
        with pytest.raises(ValueError):
            BBox(*coords)

    def test_pixels_round_trip(self):
        b = BBox.from_pixels(100, 50, 300, 250, 1000, 500)
        assert b.as_tuple() == (0.1, 0.1, 0.3, 0.5)
        assert b.to_pixels(1000, 500) == (100, 50, 300, 250)

    def test_clipped(self):
        assert BBox.clipped(-0.2, 0.1, 1.3, 0.4) == BBox(0.0, 0.1, 1.0, 0.4)
        with pytest.raises(ValueError):
            BBox.clipped(1.1, 0.1, 1.3, 0.4)


class TestFinalize:
    def test_empty_page_keeps_only_global_region(self):
        rs = finalize_roi_set([])
        assert (rs.n_text, rs.n_vision, len(rs)) == (0, 0, 1)
        assert rs.whole_image.cls is RoiClass.WHOLE_IMAGE
        assert rs.whole_image.bbox == FULL_PAGE
        assert rs.whole_image.id == GLOBAL_REGION_ID

    def test_counts(self):
        rs = finalize_roi_set([
            text(0, 0.1, 0.1, 0.2, 0.2),
            text(1, 0.3, 0.1, 0.4, 0.2),
            RoI(2, BBox(0.1, 0.5, 0.9, 0.9), RoiClass.VISION),
        ])
        assert (rs.n_text, rs.n_vision, len(rs)) == (2, 1, 4)
        assert rs.regions[-1].cls is RoiClass.WHOLE_IMAGE

    def test_rejects_whole_image_input(self):
        with pytest.raises(ValueError):
            finalize_roi_set([RoI(0, FULL_PAGE, RoiClass.WHOLE_IMAGE)])

    def test_text_region_covering_page_is_fine(self):
        rs = finalize_roi_set([RoI(0, FULL_PAGE, RoiClass.TEXT)])
        assert rs.n_text == 1

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValueError, match="duplicate"):
            finalize_roi_set([text(3, 0.1, 0.1, 0.2, 0.2), text(3, 0.3, 0.3, 0.4, 0.4)])

    def test_rejects_negative_ids(self):
        with pytest.raises(ValueError):
            finalize_roi_set([text(-1, 0.1, 0.1, 0.2, 0.2)])

    def test_roiset_requires_single_trailing_global(self):
        with pytest.raises(ValueError):
            RoiSet((text(0, 0.1, 0.1, 0.2, 0.2),))

    def test_score_range(self):
        with pytest.raises(ValueError):
            RoI(0, BBox(0.1, 0.1, 0.2, 0.2), RoiClass.TEXT, score=1.5)

    def test_idempotent_on_detected_regions(self, rng):
        rs = finalize_roi_set(random_regions(rng, 7, 2))
        assert finalize_roi_set(rs.detected) == rs


class TestReadingOrder:
    def test_top_box_first(self):
        rs = finalize_roi_set([text(0, 0.1, 0.50, 0.3, 0.55), text(1, 0.6, 0.10, 0.8, 0.15)])
        assert reading_order(rs) == [1, 0]

    def test_same_row_leftmost_first(self):
        # heights 0.05 -> tolerance 0.025; y1 differs by 0.01
        rs = finalize_roi_set([text(0, 0.6, 0.10, 0.8, 0.15), text(1, 0.1, 0.11, 0.3, 0.16)])
        assert reading_order(rs) == [1, 0]

    def test_tie_broken_by_id(self):
        rs = finalize_roi_set([text(5, 0.1, 0.1, 0.2, 0.2), text(2, 0.1, 0.1, 0.2, 0.2)])
        assert reading_order(rs) == [2, 5]

    def test_vision_and_text_interleave_geometrically(self):
        rs = finalize_roi_set([
            text(0, 0.1, 0.8, 0.2, 0.85),
            RoI(1, BBox(0.1, 0.3, 0.9, 0.6), RoiClass.VISION),
            text(2, 0.1, 0.1, 0.2, 0.15),
        ])
        assert reading_order(rs) == [2, 1, 0]

    @staticmethod
    def brute_force(regions):
        """Explicit sort by (row bucket, x1, id); rows anchored at their first y1."""
        heights = sorted(r.bbox.height for r in regions)
        n = len(heights)
        median = heights[n // 2] if n % 2 else 0.5 * (heights[n // 2 - 1] + heights[n // 2])
        tol = 0.5 * median
        bucket = {}
        anchor, current = None, -1
        for r in sorted(regions, key=lambda r: (r.bbox.y1, r.bbox.x1, r.id)):
            if anchor is None or r.bbox.y1 - anchor > tol:
                current += 1
                anchor = r.bbox.y1
            bucket[r.id] = current
        return [r.id for r in sorted(regions, key=lambda r: (bucket[r.id], r.bbox.x1, r.id))]

    def test_matches_brute_force(self, rng):
        for _ in range(200):
            regions = random_regions(rng, 4, 1)
            assert reading_order(finalize_roi_set(regions)) == self.brute_force(regions)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 25), st.integers(0, 4))
    def test_bijection_and_shuffle_invariance(self, seed, nt, nv):
        rng = np.random.default_rng(seed)
        regions = random_regions(rng, nt, nv)
        order = reading_order(finalize_roi_set(regions))
        assert sorted(order) == sorted(r.id for r in regions)
        perm = rng.permutation(len(regions))
        assert reading_order(finalize_roi_set([regions[i] for i in perm])) == order

    def test_row_tolerance_is_half_median_height(self):
        boxes = [BBox(0, 0, 0.1, h) for h in (0.1, 0.2, 0.4)]
        assert row_tolerance(boxes) == pytest.approx(0.1)
        assert row_tolerance([]) == 0.0


class TestPoolingConfig:
    def test_defaults(self):
        cfg = PoolingConfig()
        assert (cfg.s_t, cfg.s_v, cfg.s_g) == (1, 4, 8)

    @pytest.mark.parametrize("args", [(2, 1, 8), (1, 9, 8), (0, 4, 8), (1, 4, 8, 0), (1.0, 4, 8)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            PoolingConfig(*args)


class TestFeatures:
    def test_feature_map_rejects_nan(self):
        v = np.zeros((2, 2, 3))
        v[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            FeatureMap(v)

    def test_pyramid_halving_enforced(self):
        a = FeatureMap(np.zeros((8, 8, 2)))
        with pytest.raises(ValueError):
            FeaturePyramid((a, FeatureMap(np.zeros((3, 4, 2)))), 1, (8, 8))
        with pytest.raises(ValueError):
            FeaturePyramid((a, FeatureMap(np.zeros((4, 4, 3)))), 1, (8, 8))
        pyr = FeaturePyramid((FeatureMap(np.zeros((5, 7, 2))), FeatureMap(np.zeros((3, 4, 2)))), 1, (5, 7))
        assert pyr.channels == 2

    def test_feature_map_is_read_only(self):
        fm = FeatureMap(np.zeros((2, 2, 1)))
        with pytest.raises(ValueError):
            fm.values[0, 0, 0] = 1.0
