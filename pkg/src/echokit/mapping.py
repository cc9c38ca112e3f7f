"""Trajectory-driven map assembly and scoring against the room outline.

Each pose contributes one reflector point: the strongest echo's delay is
converted to range (round trip), the beam azimuth to a world bearing, and
the classifier, when supplied, decides whether the point survives into the
accepted set.  Scoring measures distances from accepted points to the
nearest wall segment of the ground-truth outline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from echokit import classifier as _classifier
from echokit import pipeline, room, toa
from echokit.doa import DoaEstimate
from echokit.geometry import ArrayGeometry, Pose, ProbeSignal
from echokit.pipeline import EchoFeature, probe_at_pose, wall_echo_truth  # noqa: F401  (mapper surface)
from echokit.seeding import derive_seed
from echokit.toa import ToaEstimate


@dataclass
class Trajectory:
    poses: list[Pose]

    def __post_init__(self):
        if not self.poses:
            raise ValueError("trajectory needs at least one pose")


@dataclass
class ReflectorPoint:
    x_m: float
    y_m: float
    source_pose: int
    accepted: bool
    feature: EchoFeature


@dataclass
class SpatialMap:
    points: list[ReflectorPoint]
    room: room.RoomSpec


@dataclass(frozen=True)
class MapMetrics:
    wall_fraction: float
    spurious_count: int
    accepted_count: int


def wall_following_trajectory(
    room_spec: room.RoomSpec, margin_m: float, spacing_m: float, cross: bool = False
) -> Trajectory:
    """Rectangular wall-hugging path ``margin_m`` inside the outline, poses
    every ``spacing_m``, heading tangent to the path.  With ``cross=True``
    the robot also traverses the room diagonal, which adds poses far from
    every wall (useful to exercise spurious estimates)."""
    lx, ly, _ = room_spec.dims_m
    if not 0 < 2 * margin_m < min(lx, ly):
        raise ValueError("margin must leave a nonempty inner rectangle")
    if spacing_m <= 0:
        raise ValueError("spacing_m must be positive")
    x0, x1 = margin_m, lx - margin_m
    y0, y1 = margin_m, ly - margin_m
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    poses: list[Pose] = []
    for i, (cx, cy) in enumerate(corners):
        nx, ny = corners[(i + 1) % 4]
        seg_len = math.hypot(nx - cx, ny - cy)
        heading = math.atan2(ny - cy, nx - cx)
        steps = max(1, int(seg_len / spacing_m))
        for k in range(steps):
            frac = k / steps
            poses.append(Pose(cx + frac * (nx - cx), cy + frac * (ny - cy), heading))
    if cross:
        heading = math.atan2(y1 - y0, x1 - x0)
        steps = max(2, int(math.hypot(x1 - x0, y1 - y0) / spacing_m))
        for k in range(1, steps):
            frac = k / steps
            poses.append(Pose(x0 + frac * (x1 - x0), y0 + frac * (y1 - y0), heading))
    return Trajectory(poses=poses)


def validate_trajectory(traj: Trajectory, room_spec: room.RoomSpec, geom: ArrayGeometry) -> None:
    for i, pose in enumerate(traj.poses):
        if not (
            geom.radius_m < pose.x_m < room_spec.dims_m[0] - geom.radius_m
            and geom.radius_m < pose.y_m < room_spec.dims_m[1] - geom.radius_m
        ):
            raise ValueError(f"pose {i} leaves the array less than one radius from a wall")


def project(pose: Pose, toa_est: ToaEstimate, doa_est: DoaEstimate, geom: ArrayGeometry, pose_index: int = 0) -> ReflectorPoint:
    """World-frame reflector point implied by a delay and bearing estimate.

    Range uses the round-trip reading: ``c * tau / (2 fs)``; the world
    bearing is the pose heading plus the array-frame azimuth.
    """
    range_m = geom.speed_of_sound_mps * toa_est.tau / (2.0 * geom.sample_rate_hz)
    bearing = pose.heading_rad + doa_est.azimuth_rad
    return ReflectorPoint(
        x_m=pose.x_m + range_m * math.cos(bearing),
        y_m=pose.y_m + range_m * math.sin(bearing),
        source_pose=pose_index,
        accepted=True,
        feature=EchoFeature(toa_delay=toa_est.tau, beam_power=doa_est.power),
    )


def _map_point(task, args) -> ReflectorPoint:
    index, pose = task
    room_spec, geom, probe, noise, cfg, params = args
    pose_noise = room.with_seed(noise, derive_seed(noise.seed, "pose", index))
    toa_est, doa_est, _ = pipeline.probe_at_pose(pose, room_spec, geom, probe, pose_noise, cfg, params)
    return project(pose, toa_est, doa_est, geom, pose_index=index)


def build_map(
    traj: Trajectory,
    room_spec: room.RoomSpec,
    geom: ArrayGeometry,
    probe: ProbeSignal,
    noise: room.NoiseModel,
    cfg: toa.FreqDomainConfig,
    model=None,
    params: pipeline.PipelineParams = pipeline.PipelineParams(),
    jobs: int = 1,
) -> SpatialMap:
    """One reflector point per pose; with a classifier, only points judged to
    be wall echoes keep their accepted flag."""
    validate_trajectory(traj, room_spec, geom)
    tasks = list(enumerate(traj.poses))
    args = (room_spec, geom, probe, noise, cfg, params)
    if jobs > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_map_point, tasks, [args] * len(tasks), chunksize=4))
    else:
        points = [_map_point(task, args) for task in tasks]
    if model is not None:
        for point in points:
            label, _ = _classifier.predict(model, point.feature)
            point.accepted = label == _classifier.EchoClass.WALL
    return SpatialMap(points=points, room=room_spec)


def _point_segment_distance(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> float:
    vx, vy = bx - ax, by - ay
    t = ((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy)
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def distance_to_outline(x: float, y: float, room_spec: room.RoomSpec) -> float:
    lx, ly, _ = room_spec.dims_m
    walls = [
        (0.0, 0.0, lx, 0.0),
        (lx, 0.0, lx, ly),
        (lx, ly, 0.0, ly),
        (0.0, ly, 0.0, 0.0),
    ]
    return min(_point_segment_distance(x, y, *w) for w in walls)


def map_metrics(spatial_map: SpatialMap, tol_m: float = 0.3) -> MapMetrics:
    """Fraction of accepted points within ``tol_m`` of the room outline and
    the count of accepted points farther than that."""
    accepted = [p for p in spatial_map.points if p.accepted]
    if not accepted:
        return MapMetrics(wall_fraction=0.0, spurious_count=0, accepted_count=0)
    near = sum(1 for p in accepted if distance_to_outline(p.x_m, p.y_m, spatial_map.room) <= tol_m)
    return MapMetrics(
        wall_fraction=near / len(accepted),
        spurious_count=len(accepted) - near,
        accepted_count=len(accepted),
    )
