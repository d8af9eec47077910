import math

import numpy as np
import pytest

from detkit.geometry import Box
from detkit.pyramid import (
    FeatureMap, PyramidSpec, assign_level, fuse_levels, gen_anchors,
    redistribute,
)
from detkit.resize import bilinear_resize, nearest_resize


class TestSpec:
    def test_default_levels(self):
        spec = PyramidSpec()
        assert spec.strides == (4, 8, 16, 32)
        assert spec.names == ("C2", "C3", "C4", "C5")

    def test_strides_must_double(self):
        with pytest.raises(ValueError):
            PyramidSpec(levels=(("a", 4), ("b", 12)))

    def test_from_strides(self):
        spec = PyramidSpec.from_strides([8, 16], scales=[4.0], ratios=[1.0])
        assert spec.names == ("s8", "s16")

    def test_bad_anchor_params(self):
        with pytest.raises(ValueError):
            PyramidSpec(scales=())
        with pytest.raises(ValueError):
            PyramidSpec(ratios=(0.5, -1.0))


class TestGenAnchors:
    def test_single_cell(self):
        spec = PyramidSpec(levels=(("only", 32),), scales=(1.0,),
                           ratios=(1.0,))
        (anchors,) = gen_anchors(spec, 32, 32)
        assert len(anchors) == 1
        a = anchors[0]
        assert (a.cx, a.cy) == (16.0, 16.0)
        assert (a.width, a.height) == (32.0, 32.0)

    def test_grid_size(self):
        spec = PyramidSpec(levels=(("fine", 4),), scales=(1.0,), ratios=(1.0,))
        (anchors,) = gen_anchors(spec, 64, 64)
        assert len(anchors) == 16 * 16

    def test_closed_form_count(self):
        spec = PyramidSpec()
        image_w, image_h = 100, 60
        per_level = gen_anchors(spec, image_w, image_h)
        for (name, stride), anchors in zip(spec.levels, per_level):
            expected = (math.ceil(image_w / stride)
                        * math.ceil(image_h / stride)
                        * len(spec.scales) * len(spec.ratios))
            assert len(anchors) == expected

    def test_deterministic(self):
        spec = PyramidSpec()
        assert gen_anchors(spec, 48, 48) == gen_anchors(spec, 48, 48)

    def test_aspect_ratios(self):
        spec = PyramidSpec(levels=(("only", 16),), scales=(2.0,),
                           ratios=(0.5, 1.0, 2.0))
        (anchors,) = gen_anchors(spec, 16, 16)
        for a, r in zip(anchors, (0.5, 1.0, 2.0)):
            assert a.width / a.height == pytest.approx(r)
            assert a.width * a.height == pytest.approx((2.0 * 16) ** 2)

    def test_bad_image_size(self):
        with pytest.raises(ValueError):
            gen_anchors(PyramidSpec(), 0, 10)


class TestAssignLevel:
    def test_canonical_box(self):
        spec = PyramidSpec()
        assert assign_level(Box(0, 0, 224, 224), spec) == 2  # stride 16

    def test_double_side_moves_up(self):
        assert assign_level(Box(0, 0, 448, 448), PyramidSpec()) == 3

    def test_small_box_clamps_low(self):
        assert assign_level(Box(0, 0, 10, 10), PyramidSpec()) == 0

    def test_zero_area_lowest(self):
        assert assign_level(Box(5, 5, 5, 5), PyramidSpec()) == 0

    def test_huge_box_clamps_high(self):
        assert assign_level(Box(0, 0, 10000, 10000), PyramidSpec()) == 3

    def test_monotone_in_area(self):
        spec = PyramidSpec()
        sides = np.linspace(1, 2000, 300)
        levels = [assign_level(Box(0, 0, s, s), spec) for s in sides]
        assert all(b >= a for a, b in zip(levels, levels[1:]))


def pyramid_fixture(channels=2, base=16, levels=4, fill=None):
    maps = []
    for i in range(levels):
        stride = 4 * 2 ** i
        size = base // 2 ** i
        value = float(i) if fill is None else fill
        maps.append(FeatureMap(np.full((channels, size, size), value),
                               stride))
    return maps


class TestFuseLevels:
    def test_identical_constant_maps(self):
        maps = pyramid_fixture(fill=3.5)
        fused = fuse_levels(maps)
        assert np.allclose(fused.tensor, 3.5)
        mid = maps[len(maps) // 2]
        assert fused.tensor.shape == mid.tensor.shape
        assert fused.stride == mid.stride

    def test_mean_of_two(self):
        maps = [
            FeatureMap(np.zeros((1, 8, 8)), 4),
            FeatureMap(np.full((1, 4, 4), 2.0), 8),
        ]
        fused = fuse_levels(maps)
        assert np.allclose(fused.tensor, 1.0)

    def test_constant_conservation(self):
        maps = pyramid_fixture()
        fused = fuse_levels(maps)
        want = np.mean([m.tensor.mean() for m in maps])
        assert abs(fused.tensor.mean() - want) < 1e-6

    def test_channel_mismatch(self):
        maps = [FeatureMap(np.zeros((1, 8, 8)), 4),
                FeatureMap(np.zeros((2, 4, 4)), 8)]
        with pytest.raises(ValueError):
            fuse_levels(maps)

    def test_needs_two_maps(self):
        with pytest.raises(ValueError):
            fuse_levels([FeatureMap(np.zeros((1, 4, 4)), 4)])


class TestRedistribute:
    def test_zero_fused_is_identity(self):
        maps = pyramid_fixture()
        mid = maps[len(maps) // 2]
        fused = FeatureMap(np.zeros_like(mid.tensor), mid.stride)
        out = redistribute(fused, maps)
        for got, orig in zip(out, maps):
            assert np.array_equal(got.tensor, orig.tensor)
            assert got.stride == orig.stride

    def test_constant_residual(self):
        maps = pyramid_fixture(fill=1.0)
        mid = maps[len(maps) // 2]
        fused = FeatureMap(np.full_like(mid.tensor, 0.25), mid.stride)
        out = redistribute(fused, maps)
        for got in out:
            assert np.allclose(got.tensor, 1.25)

    def test_shapes_preserved(self):
        rng = np.random.default_rng(0)
        maps = [FeatureMap(rng.normal(size=(3, 16 // 2 ** i, 12 // 2 ** i)),
                           4 * 2 ** i) for i in range(3)]
        fused = fuse_levels(maps)
        out = redistribute(fused, maps)
        assert [m.tensor.shape for m in out] == \
            [m.tensor.shape for m in maps]


class TestResize:
    def test_bilinear_constant(self):
        arr = np.full((2, 4, 4), 7.0)
        assert np.allclose(bilinear_resize(arr, 9, 6), 7.0)

    def test_bilinear_ramp_exact(self):
        # doubling a linear ramp keeps it linear
        arr = np.arange(4.0).reshape(1, 1, 4).repeat(4, axis=1)
        out = bilinear_resize(arr, 4, 8)
        diffs = np.diff(out[0, 0, 1:-1])
        assert np.allclose(diffs, diffs[0])

    def test_nearest_preserves_values(self):
        arr = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        out = nearest_resize(arr, 4, 4)
        assert set(np.unique(out)) == {1.0, 2.0, 3.0, 4.0}

    def test_same_size_copy(self):
        arr = np.ones((1, 3, 3))
        out = bilinear_resize(arr, 3, 3)
        assert np.array_equal(out, arr)
        assert out is not arr
