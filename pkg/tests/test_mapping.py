import math

import numpy as np
import pytest

from echokit import pipeline, room, toa
from echokit.doa import DoaEstimate
from echokit.geometry import Pose
from echokit.mapping import (
    SpatialMap,
    Trajectory,
    build_map,
    distance_to_outline,
    map_metrics,
    project,
    wall_following_trajectory,
)
from echokit.pipeline import EchoFeature
from echokit.room import NoiseModel, RoomSpec
from echokit.toa import FreqDomainConfig, ToaEstimate

FS = 22050.0


def _toa(tau, gain=0.5):
    return ToaEstimate(tau=tau, gain=gain, score=1.0)


def _doa(azimuth, power=2.0):
    return DoaEstimate(azimuth_rad=azimuth, power=power)


class TestProject:
    def test_zero_delay_stays_at_pose(self, paper_geom):
        point = project(Pose(2.0, 3.0, 0.4), _toa(0.0), _doa(1.0), paper_geom)
        assert (point.x_m, point.y_m) == (2.0, 3.0)

    def test_axis_aligned(self, paper_geom):
        tau = 1.5 * 2 * FS / 343.0  # 1.5 m round trip
        point = project(Pose(2.0, 2.0, 0.0), _toa(tau), _doa(0.0), paper_geom)
        assert point.x_m == pytest.approx(3.5)
        assert point.y_m == pytest.approx(2.0)

    def test_heading_rotation(self, paper_geom):
        tau = 1.5 * 2 * FS / 343.0
        point = project(Pose(2.0, 2.0, math.pi / 2), _toa(tau), _doa(0.0), paper_geom)
        assert point.x_m == pytest.approx(2.0)
        assert point.y_m == pytest.approx(3.5)

    def test_equivariance_under_joint_rotation(self, paper_geom):
        # rotating the heading while counter-rotating the array-frame
        # azimuth leaves the world point fixed
        tau = 200.0
        base = project(Pose(1.0, 1.0, 0.3), _toa(tau), _doa(0.7), paper_geom)
        for delta in (0.5, -1.2, 2.9):
            moved = project(Pose(1.0, 1.0, 0.3 + delta), _toa(tau), _doa(0.7 - delta), paper_geom)
            assert moved.x_m == pytest.approx(base.x_m, abs=1e-9)
            assert moved.y_m == pytest.approx(base.y_m, abs=1e-9)


class TestTrajectory:
    def test_wall_following_rectangle(self):
        spec = RoomSpec(dims_m=(8, 6, 5), t60_s=0.5)
        traj = wall_following_trajectory(spec, margin_m=1.5, spacing_m=0.5)
        assert len(traj.poses) > 10
        for pose in traj.poses:
            assert min(pose.x_m, 8 - pose.x_m, pose.y_m, 6 - pose.y_m) == pytest.approx(1.5, abs=1e-9)

    def test_cross_adds_interior_poses(self):
        spec = RoomSpec(dims_m=(8, 6, 5), t60_s=0.5)
        plain = wall_following_trajectory(spec, 1.5, 0.5)
        crossed = wall_following_trajectory(spec, 1.5, 0.5, cross=True)
        assert len(crossed.poses) > len(plain.poses)
        assert any(min(p.x_m, 8 - p.x_m, p.y_m, 6 - p.y_m) > 2.0 for p in crossed.poses)

    def test_margin_validation(self):
        spec = RoomSpec(dims_m=(8, 6, 5), t60_s=0.5)
        with pytest.raises(ValueError):
            wall_following_trajectory(spec, margin_m=3.0, spacing_m=0.5)

    def test_empty_trajectory_rejected(self):
        with pytest.raises(ValueError):
            Trajectory(poses=[])


class TestMapMetrics:
    def _map(self, points_with_flags):
        spec = RoomSpec(dims_m=(8, 6, 5), t60_s=0.5)
        from echokit.mapping import ReflectorPoint

        reflectors = [
            ReflectorPoint(x_m=x, y_m=y, source_pose=i, accepted=acc, feature=EchoFeature(100.0, 1.0))
            for i, (x, y, acc) in enumerate(points_with_flags)
        ]
        return SpatialMap(points=reflectors, room=spec)

    def test_all_on_walls(self):
        sm = self._map([(0.0, 3.0, True), (8.0, 2.0, True), (5.0, 0.0, True), (2.0, 6.0, True)])
        metrics = map_metrics(sm, tol_m=0.3)
        assert metrics.wall_fraction == 1.0
        assert metrics.spurious_count == 0
        assert metrics.accepted_count == 4

    def test_all_at_center(self):
        sm = self._map([(4.0, 3.0, True), (4.1, 3.1, True)])
        metrics = map_metrics(sm, tol_m=0.3)
        assert metrics.wall_fraction == 0.0
        assert metrics.spurious_count == 2

    def test_hand_enumerated_mixed_set(self):
        # distances computed by hand against the 8 x 6 outline
        pts = [
            (0.2, 3.0, True),   # 0.2 m from x=0 wall -> near
            (7.5, 5.9, True),   # 0.1 m from y=6 wall -> near
            (1.0, 1.0, True),   # 1.0 m from both near walls -> far
            (4.0, 3.0, False),  # rejected, ignored by the metrics
        ]
        metrics = map_metrics(self._map(pts), tol_m=0.3)
        assert metrics.accepted_count == 3
        assert metrics.spurious_count == 1
        assert metrics.wall_fraction == pytest.approx(2 / 3)

    def test_monotone_in_tolerance(self):
        pts = [(0.2, 3.0, True), (1.0, 1.0, True), (4.0, 3.0, True), (7.9, 0.5, True)]
        sm = self._map(pts)
        fractions = [map_metrics(sm, tol_m=t).wall_fraction for t in (0.05, 0.3, 1.0, 3.0)]
        assert fractions == sorted(fractions)

    def test_distance_to_outline_corners(self):
        spec = RoomSpec(dims_m=(8, 6, 5), t60_s=0.5)
        assert distance_to_outline(0.0, 0.0, spec) == 0.0
        assert distance_to_outline(4.0, 3.0, spec) == pytest.approx(3.0)
        assert distance_to_outline(-1.0, -1.0, spec) == pytest.approx(math.sqrt(2))


@pytest.fixture(scope="module")
def scenario():
    from echokit.geometry import generate_probe

    spec = RoomSpec(dims_m=(8, 6, 5), t60_s=0.4)
    cfg = FreqDomainConfig(dft_len=8192)
    probe = generate_probe(800, 6000, FS, seed=7)
    params = pipeline.PipelineParams(rir_length_s=0.25)
    return spec, cfg, probe, params


class TestBuildMap:

    def test_probe_at_pose_mirror_oracle(self, paper_geom, scenario):
        # pose 1.5 m from one wall, others far, high SNR: delay within one
        # sample and bearing within two degrees of the mirror geometry
        spec, cfg, probe, params = scenario
        pose = Pose(1.5, 3.0, 0.0)
        noise = NoiseModel(60.0, math.inf, seed=0)
        toa_est, doa_est, feature = pipeline.probe_at_pose(pose, spec, paper_geom, probe, noise, cfg, params)
        truth = pipeline.wall_echo_truth(spec, pose, paper_geom)
        nearest = min(truth, key=lambda e: e.tau_samples)
        assert abs(toa_est.tau - nearest.tau_samples) <= 1.0
        err = abs((doa_est.azimuth_rad - nearest.azimuth_array_rad + math.pi) % (2 * math.pi) - math.pi)
        assert err <= math.radians(2.0) + 1e-9
        assert feature.toa_delay == toa_est.tau

    def test_center_pose_flags_boundary(self, paper_geom, scenario):
        spec, cfg, probe, params = scenario
        pose = Pose(4.0, 3.0, 0.0)  # nearest wall 3 m, outside the interval
        noise = NoiseModel(30.0, math.inf, seed=1)
        toa_est, _, _ = pipeline.probe_at_pose(pose, spec, paper_geom, probe, noise, cfg, params)
        grid = toa.tau_grid(cfg, paper_geom)
        truth = pipeline.wall_echo_truth(spec, pose, paper_geom)
        assert all(e.tau_samples > grid[-1] for e in truth)

    def test_deterministic_under_fixed_seed(self, paper_geom, scenario):
        spec, cfg, probe, params = scenario
        pose = Pose(1.5, 3.0, 0.2)
        noise = NoiseModel(10.0, 40.0, seed=11)
        a = pipeline.probe_at_pose(pose, spec, paper_geom, probe, noise, cfg, params)
        b = pipeline.probe_at_pose(pose, spec, paper_geom, probe, noise, cfg, params)
        assert a == b

    def test_no_classifier_accepts_everything(self, paper_geom, scenario):
        spec, cfg, probe, params = scenario
        traj = Trajectory(poses=[Pose(1.5, 3.0, 0.0), Pose(6.5, 3.0, math.pi)])
        noise = NoiseModel(20.0, 40.0, seed=5)
        spatial_map = build_map(traj, spec, paper_geom, probe, noise, cfg, model=None, params=params)
        assert len(spatial_map.points) == 2
        assert all(p.accepted for p in spatial_map.points)

    def test_classifier_filters_subset(self, paper_geom, scenario):
        # with a model, the accepted set is a subset with identical geometry
        from echokit import classifier as clf

        spec, cfg, probe, params = scenario
        traj = Trajectory(poses=[Pose(1.5, 3.0, 0.0), Pose(4.0, 3.0, 0.0), Pose(6.5, 3.0, math.pi)])
        noise = NoiseModel(20.0, 40.0, seed=5)
        unfiltered = build_map(traj, spec, paper_geom, probe, noise, cfg, model=None, params=params)

        rng = np.random.default_rng(0)
        fake = [
            clf.LabeledSample(EchoFeature(float(t), float(p)), clf.EchoClass.WALL if p > 1 else clf.EchoClass.NO_WALL, 0.0)
            for t, p in zip(rng.uniform(130, 250, 40), rng.uniform(0, 2, 40))
        ]
        model = clf.train_svm(fake)
        filtered = build_map(traj, spec, paper_geom, probe, noise, cfg, model=model, params=params)
        assert [(p.x_m, p.y_m) for p in filtered.points] == [(p.x_m, p.y_m) for p in unfiltered.points]
        accepted = {i for i, p in enumerate(filtered.points) if p.accepted}
        assert accepted <= {i for i, p in enumerate(unfiltered.points) if p.accepted}

    def test_pose_outside_room_rejected(self, paper_geom, scenario):
        spec, cfg, probe, params = scenario
        with pytest.raises(ValueError):
            build_map(
                Trajectory(poses=[Pose(0.05, 3.0, 0.0)]), spec, paper_geom, probe,
                NoiseModel(20.0, 40.0, seed=0), cfg, params=params,
            )
