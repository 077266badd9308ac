import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curbsight import pipeline as P
from curbsight.camera import CameraIntrinsics, pixel_to_angle
from curbsight.config import CorrectorConfig, RunConfig
from curbsight.errors import InvalidInputError
from curbsight.geodesy import LocalXY, from_local_xy, haversine_distance, to_local_xy
from curbsight.ingest import sample_dem
from curbsight.simulate import (
    MOUNT_HEIGHT_M,
    SCENARIOS,
    SURVEY_CLASS_MIX,
    NoiseConfig,
    SceneConfig,
    biased_depth,
    generate_scene,
    inject_depth_bias,
    make_trajectory,
    project_observation,
    render_observations,
)
from curbsight.triangulate import candidate_point

INTR = CameraIntrinsics()
NO_CORRECTOR = CorrectorConfig(enabled=False)


def kinds(scene):
    out = {}
    for o in scene.objects:
        out[o.kind] = out.get(o.kind, 0) + 1
    return out


class TestScene:
    def test_survey_mix(self):
        scene = generate_scene(SceneConfig(n_objects=63))
        assert kinds(scene) == SURVEY_CLASS_MIX

    def test_largest_remainder_apportionment(self):
        # 20 * (38, 17, 8) / 63 = 12.06, 5.40, 2.54
        assert kinds(generate_scene(SceneConfig(n_objects=20))) == {"tree": 12, "pole": 5, "other": 3}

    def test_deterministic(self):
        assert generate_scene(seed=5) == generate_scene(seed=5)
        assert generate_scene(seed=5).objects != generate_scene(seed=6).objects

    def test_only_trees_have_crowns(self):
        for o in generate_scene(SceneConfig(n_objects=40)).objects:
            assert (o.crown_width is not None) == (o.kind == "tree")

    def test_lateral_offsets_respected(self):
        cfg = SceneConfig(n_objects=30, curvature_deg_per_100m=0.0, heading_deg=0.0)
        scene = generate_scene(cfg, seed=2)
        for o in scene.objects:
            xy = to_local_xy(o.location, scene.road.origin)
            assert 2.0 - 1e-6 <= abs(xy.x) <= 15.0 + 1e-6

    def test_sloped_dem_is_a_plane(self):
        cfg = SceneConfig(n_objects=10, dem_grade=(0.05, -0.02))
        scene = generate_scene(cfg, seed=1)
        for o in scene.objects:
            xy = to_local_xy(o.location, scene.road.origin)
            assert o.base_elevation == pytest.approx(100.0 + 0.05 * xy.x - 0.02 * xy.y, abs=1e-6)

    def test_rejects_bad_config(self):
        with pytest.raises(InvalidInputError):
            SceneConfig(lateral_offset_range=(0.0, 5.0))
        with pytest.raises(InvalidInputError):
            NoiseConfig(depth_compression=0.0)
        with pytest.raises(InvalidInputError):
            NoiseConfig(pixel_jitter_sigma=-1.0)


class TestTrajectory:
    def test_high_speed_has_fewer_poses(self):
        scene = generate_scene(SceneConfig(n_objects=20), speed_class=None)
        slow = make_trajectory(scene, "slow", "inside")
        high = make_trajectory(scene, "high", "inside")
        assert len(high.poses) < len(slow.poses)
        assert [p.frame_id for p in slow.poses[:3]] == [0, 30, 60]

    def test_high_speed_sees_objects_from_fewer_nearby_poses(self):
        scene = generate_scene(SceneConfig(n_objects=20), speed_class=None)
        counts = {}
        for speed in ("slow", "high"):
            r = render_observations(scene, INTR, trajectory=make_trajectory(scene, speed, "inside"))
            counts[speed] = sum(1 for d in r.distances.values() if d <= 15.0)
        assert counts["high"] < counts["slow"]

    def test_unknown_labels(self):
        scene = generate_scene(speed_class=None)
        with pytest.raises(InvalidInputError):
            make_trajectory(scene, "medium", "inside")
        with pytest.raises(InvalidInputError):
            make_trajectory(scene, "slow", "roof")


class TestProjection:
    def test_bearing_and_range_recover_object(self):
        scene = generate_scene(SceneConfig(n_objects=20, curvature_deg_per_100m=4.0), seed=3)
        n = 0
        for pose in scene.trajectory.poses:
            for obj in scene.objects:
                proj = project_observation(obj, pose, INTR, max_range=50.0)
                if proj is None:
                    continue
                theta = pixel_to_angle(proj.pixel.u, INTR)
                c = candidate_point(pose, theta, proj.distance, pose.position)
                back = from_local_xy(c.xy, pose.position)
                assert haversine_distance(back, obj.location) < 1e-6
                n += 1
        assert n > 50

    def test_pixel_sizes_follow_pinhole(self):
        scene = generate_scene(seed=4)
        for pose in scene.trajectory.poses:
            for obj in scene.objects:
                proj = project_observation(obj, pose, INTR, 50.0)
                if proj:
                    h = proj.pixel.pixel_height * proj.distance * INTR.sensor_height / (INTR.focal_length * INTR.image_height)
                    assert h == pytest.approx(obj.height, rel=1e-12)

    def test_behind_camera_invisible(self):
        scene = generate_scene(seed=4)
        pose = scene.trajectory.poses[-1]
        first = scene.objects[0]
        assert project_observation(first, pose, INTR) is None


class TestDepthBias:
    def test_knee(self):
        noise = NoiseConfig(depth_knee=15.0, depth_compression=0.5)
        assert biased_depth(10.0, noise) == 10.0
        assert biased_depth(15.0, noise) == 15.0
        assert biased_depth(35.0, noise) == 25.0

    @given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(0.05, 1.0))
    def test_monotone_and_never_above_truth(self, a, b, c):
        noise = NoiseConfig(depth_compression=c)
        lo, hi = sorted((a, b))
        assert biased_depth(lo, noise) <= biased_depth(hi, noise)
        assert biased_depth(hi, noise) <= hi

    def test_noise_free_readings_equal(self):
        assert inject_depth_bias(12.0, NoiseConfig()) == (12.0, 12.0, 12.0)

    @given(st.floats(0.1, 80), st.integers(0, 1000))
    def test_readings_positive(self, d, seed):
        noise = NoiseConfig(depth_sample_sigma=3.0, depth_range_sigma=0.5)
        assert min(inject_depth_bias(d, noise, np.random.default_rng(seed))) > 0


class TestRender:
    def test_zero_noise_readings_are_exact(self):
        scene = generate_scene(seed=1)
        r = render_observations(scene, INTR)
        for obs in r.observations:
            assert set(obs.depth_samples) == {r.distances[(obs.object_id, obs.frame_id)]}
        assert [p.position for p in r.track.poses] == [p.position for p in r.true_track.poses]

    def test_control_pair_carries_offset(self):
        scene = generate_scene(seed=1)
        r = render_observations(scene, INTR, NoiseConfig(gps_systematic_offset=(2.4, 3.2)))
        (observed, true), = r.control_pairs
        d = to_local_xy(observed, true)
        assert (d.x, d.y) == pytest.approx((2.4, 3.2), abs=1e-9)
        reported = to_local_xy(r.track.poses[5].position, r.true_track.poses[5].position)
        assert (reported.x, reported.y) == pytest.approx((2.4, 3.2), abs=1e-9)

    def test_mount_height_sets_base_row(self):
        scene = generate_scene(seed=1, mount="outside")
        r = render_observations(scene, INTR)
        obs = r.observations[0]
        d = r.distances[(obs.object_id, obs.frame_id)]
        assert obs.pixel.v == pytest.approx(1080 + INTR.focal_px_y * MOUNT_HEIGHT_M["outside"] / d)

    def test_scenarios_share_objects(self):
        cfg = RunConfig(scenarios=tuple(SCENARIOS), scene=SceneConfig(n_objects=12), noise=NoiseConfig(gps_jitter_sigma=1.0))
        _, renders = P.simulate_renders(cfg)
        ids = [[o.object_id for o in r.ground_truth] for r in renders.values()]
        assert all(i == ids[0] for i in ids)
        assert renders["In_Slow"].ground_truth == renders["Out_Speed"].ground_truth

    def test_streams_independent_of_scenario_selection(self):
        noise = NoiseConfig(gps_jitter_sigma=1.0, pixel_jitter_sigma=20.0)
        both = RunConfig(scenarios=("In_Slow", "Out_Speed"), noise=noise)
        one = RunConfig(scenarios=("Out_Speed",), noise=noise)
        a = P.simulate_renders(both)[1]["Out_Speed"]
        b = P.simulate_renders(one)[1]["Out_Speed"]
        assert a.observations == b.observations and a.track == b.track

    def test_run_seed_drives_noise(self):
        noise = NoiseConfig(gps_jitter_sigma=1.0)
        a = P.simulate_renders(RunConfig(seed=3, noise=noise))[1]["In_Slow"]
        b = P.simulate_renders(RunConfig(seed=3, noise=replace(noise, seed=99)))[1]["In_Slow"]
        assert a.track == b.track

    def test_high_speed_doubles_pixel_jitter(self):
        scene = generate_scene(SceneConfig(n_objects=30), seed=8, speed_class=None)
        resid = {}
        for speed in ("slow", "high"):
            traj = make_trajectory(scene, speed, "inside")
            clean = render_observations(scene, INTR, trajectory=traj)
            noisy = render_observations(scene, INTR, NoiseConfig(pixel_jitter_sigma=30.0), trajectory=traj)
            du = [a.pixel.u - b.pixel.u for a, b in zip(noisy.observations, clean.observations)]
            resid[speed] = float(np.std(du))
        assert 1.5 < resid["high"] / resid["slow"] < 2.7


def _mean_error(seed, noise):
    cfg = RunConfig(seed=seed, noise=noise, corrector=NO_CORRECTOR)
    ds = P.simulate_datasets(cfg)["In_Slow"]
    return P.mean_geolocation_error(ds, P.geolocate_dataset(ds, None, cfg))


@pytest.mark.parametrize(
    "field, levels", [("gps_jitter_sigma", (0.0, 1.0, 3.0)), ("pixel_jitter_sigma", (0.0, 40.0, 160.0))]
)
def test_error_grows_with_noise(field, levels):
    errs = np.array([[_mean_error(seed, NoiseConfig(**{field: s})) for seed in range(20)] for s in levels])
    assert np.all(np.diff(errs.mean(axis=1)) > 0)
    for lo, hi in zip(errs, errs[1:]):
        assert (hi > lo).sum() >= 16
