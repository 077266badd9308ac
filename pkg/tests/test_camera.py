import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from curbsight.camera import (
    CameraIntrinsics,
    PixelMeasurement,
    TerrainContext,
    angle_to_pixel,
    estimate_crown_width,
    estimate_height,
    estimate_width,
    hfov_from_sensor,
    pixel_to_angle,
    terrain_corrected_height,
)
from curbsight.errors import ConfigError, GeometryInfeasibleError, InvalidDistanceError, OutOfBoundsError

WIDE = CameraIntrinsics(sensor_width=2 * 3.6 * math.tan(math.radians(60.0)), hfov=120.0)
DEFAULT = CameraIntrinsics()


def px(h=0.0, w=0.0, u=1920.0, v=1080.0, crown=None):
    return PixelMeasurement(u=u, v=v, pixel_height=h, pixel_width=w, crown_pixel_width=crown)


class TestPixelToAngle:
    def test_center_is_zero(self):
        assert pixel_to_angle(1920.0, WIDE) == 0.0

    def test_left_edge(self):
        assert pixel_to_angle(0.0, WIDE) == pytest.approx(60.0, abs=1e-12)

    def test_right_of_center(self):
        assert pixel_to_angle(2880.0, WIDE) == pytest.approx(-30.0, abs=1e-12)

    @pytest.mark.parametrize("u", [-0.5, 3840.5])
    def test_outside_image(self, u):
        with pytest.raises(OutOfBoundsError):
            pixel_to_angle(u, WIDE)

    @given(st.floats(0.0, 1920.0))
    def test_odd_about_center(self, k):
        assert pixel_to_angle(1920.0 + k, DEFAULT) == pytest.approx(-pixel_to_angle(1920.0 - k, DEFAULT), abs=1e-12)

    @given(st.floats(-35.0, 35.0))
    def test_angle_to_pixel_inverts(self, theta):
        assert pixel_to_angle(angle_to_pixel(theta, DEFAULT), DEFAULT) == pytest.approx(theta, abs=1e-9)


class TestHfov:
    def test_square_sensor(self):
        assert hfov_from_sensor(7.2, 3.6) == pytest.approx(90.0, abs=1e-12)

    def test_default_sensor(self):
        # 2*atan(0.72) = 71.5078 deg
        assert hfov_from_sensor(5.184, 3.6) == pytest.approx(71.6, abs=0.1)
        assert DEFAULT.hfov == pytest.approx(71.50777450887350, abs=1e-12)

    def test_zero_width_limit(self):
        assert hfov_from_sensor(0.0, 3.6) == 0.0

    def test_inconsistent_hfov_rejected(self):
        with pytest.raises(ConfigError):
            CameraIntrinsics(hfov=120.0)

    def test_hfov_within_tolerance_kept(self):
        assert CameraIntrinsics(hfov=72.5).hfov == 72.5

    @pytest.mark.parametrize("field", ["focal_length", "sensor_width", "image_width", "mount_height"])
    def test_non_positive_rejected(self, field):
        with pytest.raises(ConfigError):
            CameraIntrinsics(**{field: 0})


class TestMetricExtent:
    def test_zero_pixels(self):
        assert estimate_height(px(h=0.0), 10.0, DEFAULT) == 0.0
        assert estimate_width(px(w=0.0), 10.0, DEFAULT) == 0.0

    def test_height_example(self):
        # 1080 * 10 * 0.003888 / (0.0036 * 2160)
        assert estimate_height(px(h=1080.0), 10.0, DEFAULT) == pytest.approx(5.4, rel=1e-12)
        assert estimate_height(px(h=1080.0), 20.0, DEFAULT) == pytest.approx(10.8, rel=1e-12)

    def test_width_example(self):
        # 384 * 10 * 0.005184 / (0.0036 * 3840)
        assert estimate_width(px(w=384.0), 10.0, DEFAULT) == pytest.approx(1.44, rel=1e-12)
        assert estimate_width(px(w=768.0), 10.0, DEFAULT) == pytest.approx(2.88, rel=1e-12)

    def test_crown_width_absent_without_measurement(self):
        assert estimate_crown_width(px(), 10.0, DEFAULT) is None
        assert estimate_crown_width(px(crown=384.0), 10.0, DEFAULT) == pytest.approx(1.44, rel=1e-12)

    @pytest.mark.parametrize("d", [0.0, -1.0, math.nan])
    def test_bad_distance(self, d):
        with pytest.raises(InvalidDistanceError):
            estimate_height(px(h=10.0), d, DEFAULT)

    @given(st.floats(0.0, 4000.0), st.floats(0.1, 200.0), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
    def test_homogeneous_in_pixels_and_distance(self, h, d, a, b):
        base = estimate_height(px(h=h), d, DEFAULT)
        assert estimate_height(px(h=a * h), b * d, DEFAULT) == pytest.approx(a * b * base, rel=1e-12, abs=1e-12)

    @given(st.floats(0.1, 40.0), st.floats(0.5, 100.0))
    def test_forward_projection_round_trip(self, height, d):
        pixels = height * DEFAULT.focal_px_y / d
        assert estimate_height(px(h=pixels), d, DEFAULT) == pytest.approx(height, rel=1e-9)


class TestTerrain:
    def test_flat_is_identity(self):
        assert terrain_corrected_height(5.0, 10.0, TerrainContext(100.0, 100.0)) == 5.0

    def test_upslope_example(self):
        # sqrt(91) = 9.5394 m horizontal, atan(3/9.5394) = 17.4576 deg
        got = terrain_corrected_height(5.0, 10.0, TerrainContext(100.0, 103.0))
        assert got == pytest.approx(6.572427255082877, abs=1e-12)

    def test_downslope_example(self):
        got = terrain_corrected_height(5.0, 10.0, TerrainContext(100.0, 97.0))
        assert got == pytest.approx(3.427572744917123, abs=1e-12)

    def test_infeasible_geometry(self):
        with pytest.raises(GeometryInfeasibleError):
            terrain_corrected_height(5.0, 3.0, TerrainContext(0.0, 3.0))

    @given(st.floats(0.0, 50.0), st.floats(0.1, 100.0), st.floats(-1000.0, 1000.0))
    def test_zero_rise_identity(self, h, d, elev):
        assert terrain_corrected_height(h, d, TerrainContext(elev, elev)) == h


def test_pixel_bounds_check():
    px(u=3839.9, v=2159.9).check_bounds(DEFAULT)
    with pytest.raises(OutOfBoundsError):
        px(u=3840.0).check_bounds(DEFAULT)
