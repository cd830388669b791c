import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from woundpatch.capture import (
    CaptureBundle,
    DepthMap,
    Intrinsics,
    RgbImage,
    ScoreMap,
    back_project,
    back_project_many,
    load_bundle,
    project,
    save_bundle,
)
from woundpatch.errors import BundleError, InvalidDepthError


def make_bundle(w=32, h=24, depth_m=0.2, with_score=True, score_size=None):
    rgb = RgbImage(values=np.full((h * 2, w * 2, 3), 128, dtype=np.uint8))
    depth = DepthMap(values=np.full((h, w), depth_m, dtype=np.float64))
    k = Intrinsics(fx=40.0, fy=40.0, cx=w / 2 - 0.5, cy=h / 2 - 0.5, width=w, height=h)
    score = None
    if with_score:
        sw, sh = score_size or (w, h)
        score = ScoreMap(values=np.linspace(0, 1, sw * sh, dtype=np.float32).reshape(sh, sw))
        if score_size and score_size != (w, h):
            # bundle requires depth-sized score; loader handles resampling
            pass
    return CaptureBundle(rgb=rgb, depth=depth, intrinsics=k, score=score, default_threshold=0.4)


class TestBackProject:
    def test_principal_point_identity(self):
        k = Intrinsics(fx=1, fy=1, cx=0, cy=0, width=10, height=10)
        assert np.allclose(back_project(0, 0, 1.0, k), [0, 0, 1])

    def test_center_maps_to_axis(self):
        k = Intrinsics(fx=500, fy=480, cx=4, cy=3, width=10, height=8)
        for d in (0.1, 0.2, 1.5):
            assert np.allclose(back_project(k.cx, k.cy, d, k), [0, 0, d])

    def test_unit_tangent_at_capture_distance(self):
        # one focal length off-center at 20 cm gives x = depth
        k = Intrinsics(fx=3, fy=3, cx=2, cy=2, width=10, height=10)
        p = back_project(k.cx + k.fx, k.cy, 0.2, k)
        assert np.allclose(p, [0.2, 0, 0.2])

    def test_rejects_nonpositive_depth(self):
        k = Intrinsics(fx=1, fy=1, cx=0, cy=0, width=4, height=4)
        with pytest.raises(InvalidDepthError):
            back_project(1, 1, 0.0, k)
        with pytest.raises(InvalidDepthError):
            back_project(1, 1, -0.5, k)

    @given(
        px=st.floats(0, 639), py=st.floats(0, 479),
        d=st.floats(0.05, 5.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_project_round_trip(self, px, py, d):
        k = Intrinsics(fx=580.0, fy=580.0, cx=239.5, cy=319.5, width=480, height=640)
        qx, qy = project(back_project(px, py, d, k), k)
        assert abs(qx - px) < 1e-9 and abs(qy - py) < 1e-9

    @given(px=st.floats(0, 100), py=st.floats(0, 100), d=st.floats(0.01, 2.0))
    @settings(max_examples=100, deadline=None)
    def test_linear_in_depth(self, px, py, d):
        k = Intrinsics(fx=50.0, fy=60.0, cx=30.0, cy=40.0, width=101, height=101)
        assert np.allclose(back_project(px, py, 2 * d, k), 2 * back_project(px, py, d, k))

    def test_many_matches_scalar(self):
        k = Intrinsics(fx=580.0, fy=570.0, cx=239.5, cy=319.5, width=480, height=640)
        rng = np.random.default_rng(1)
        px, py = rng.uniform(0, 480, 50), rng.uniform(0, 640, 50)
        d = rng.uniform(0.1, 0.5, 50)
        got = back_project_many(px, py, d, k)
        want = np.array([back_project(x, y, z, k) for x, y, z in zip(px, py, d)])
        assert np.allclose(got, want)


class TestIntrinsicsValidation:
    def test_rejects_bad_focal(self):
        with pytest.raises(BundleError):
            Intrinsics(fx=0, fy=1, cx=0, cy=0, width=4, height=4)

    def test_rejects_principal_outside(self):
        with pytest.raises(BundleError):
            Intrinsics(fx=1, fy=1, cx=5, cy=0, width=4, height=4)


class TestBundleIO:
    def test_round_trip_bit_identical(self, tmp_path):
        bundle = make_bundle()
        rng = np.random.default_rng(7)
        depth = DepthMap(values=np.round(rng.uniform(0.1, 0.4, (24, 32)) * 1000) / 1000)
        bundle = CaptureBundle(
            rgb=bundle.rgb, depth=depth, intrinsics=bundle.intrinsics,
            score=bundle.score, default_threshold=bundle.default_threshold,
        )
        save_bundle(bundle, tmp_path / "b")
        loaded = load_bundle(tmp_path / "b")
        assert np.array_equal(loaded.rgb.values, bundle.rgb.values)
        assert np.array_equal(loaded.depth.values, bundle.depth.values)
        assert np.array_equal(loaded.score.values, bundle.score.values)
        assert loaded.default_threshold == bundle.default_threshold
        # second round trip is bit-identical
        save_bundle(loaded, tmp_path / "b2")
        again = load_bundle(tmp_path / "b2")
        assert np.array_equal(again.depth.values, loaded.depth.values)
        assert np.array_equal(again.score.values, loaded.score.values)

    def test_score_resampled_to_depth_resolution(self, tmp_path):
        bundle = make_bundle(with_score=False)
        save_bundle(bundle, tmp_path / "b")
        # hand-write a half-resolution score raster
        manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
        manifest["score"] = "score.f32"
        manifest["score_width"] = 16
        manifest["score_height"] = 12
        (tmp_path / "b" / "manifest.json").write_text(json.dumps(manifest))
        np.full((12, 16), 0.5, dtype="<f4").tofile(tmp_path / "b" / "score.f32")
        loaded = load_bundle(tmp_path / "b")
        assert loaded.score.values.shape == (24, 32)
        assert np.allclose(loaded.score.values, 0.5)

    def test_all_zero_depth_loads(self, tmp_path):
        bundle = make_bundle(depth_m=0.0, with_score=False)
        save_bundle(bundle, tmp_path / "b")
        loaded = load_bundle(tmp_path / "b")
        assert not loaded.depth.valid_mask().any()

    def test_dimension_mismatch_rejected(self, tmp_path):
        bundle = make_bundle(with_score=False)
        root = save_bundle(bundle, tmp_path / "b")
        manifest = json.loads((root / "manifest.json").read_text())
        manifest["score"] = "score.f32"
        manifest["score_width"] = 32
        manifest["score_height"] = 24
        (root / "manifest.json").write_text(json.dumps(manifest))
        np.zeros(32 * 24 - 1, dtype="<f4").tofile(root / "score.f32")
        with pytest.raises(BundleError, match="score raster"):
            load_bundle(root)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(BundleError, match="manifest"):
            load_bundle(tmp_path)

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{not json")
        with pytest.raises(BundleError, match="malformed"):
            load_bundle(tmp_path)

    def test_negative_depth_rejected(self):
        with pytest.raises(InvalidDepthError):
            DepthMap(values=np.array([[-0.1, 0.2]]))

    def test_nonfinite_depth_rejected(self):
        with pytest.raises(InvalidDepthError):
            DepthMap(values=np.array([[np.nan, 0.2]]))

    def test_score_outside_unit_interval_rejected(self):
        with pytest.raises(BundleError):
            ScoreMap(values=np.array([[0.5, 1.2]], dtype=np.float32))

    def test_bundle_requires_matching_sizes(self):
        rgb = RgbImage(values=np.zeros((8, 8, 3), dtype=np.uint8))
        depth = DepthMap(values=np.full((8, 8), 0.2))
        k = Intrinsics(fx=10, fy=10, cx=4, cy=4, width=9, height=8)
        with pytest.raises(BundleError):
            CaptureBundle(rgb=rgb, depth=depth, intrinsics=k)
