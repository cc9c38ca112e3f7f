"""Per-pose probing pipeline and mirror-geometry ground truth.

This is the glue every higher-level module shares: render an observation at
a pose, remove the direct path, estimate the echo delay on the reference
microphone, then scan azimuths with the beamformer over the echo-bearing
frames.  Ground-truth echo delays and bearings come from mirroring the
source across each lateral wall, never from the estimators themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from echokit import doa, room, toa
from echokit.geometry import ArrayGeometry, Pose, ProbeSignal, mic_positions, wrap_angle

DEFAULT_RIR_LENGTH_S = 0.35


@dataclass(frozen=True)
class EchoFeature:
    """The classifier's two inputs: estimated delay and peak beam power."""

    toa_delay: float
    beam_power: float

    def __post_init__(self):
        if not (math.isfinite(self.toa_delay) and math.isfinite(self.beam_power)):
            raise ValueError("features must be finite")


@dataclass(frozen=True)
class WallEcho:
    """First-order reflection truth for one lateral wall."""

    wall: str
    tau_samples: float
    azimuth_world_rad: float
    azimuth_array_rad: float
    wall_distance_m: float


@dataclass(frozen=True)
class PipelineParams:
    """Knobs of the per-pose pipeline that are not part of the scenario's
    physical description."""

    beam_grid: doa.BeamGrid = doa.BeamGrid()
    frame_len: int = doa.DEFAULT_FRAME_LEN
    reg_gamma: float = doa.DEFAULT_REG_GAMMA
    rir_length_s: float = DEFAULT_RIR_LENGTH_S
    array_height_m: float | None = None


def array_height(room_spec: room.RoomSpec, params: PipelineParams) -> float:
    return params.array_height_m if params.array_height_m is not None else room_spec.dims_m[2] / 2.0


def wall_echo_truth(
    room_spec: room.RoomSpec, pose: Pose, geom: ArrayGeometry, array_height_m: float | None = None
) -> list[WallEcho]:
    """Mirror-geometry truth for the four lateral walls.

    The echo delay is the distance from the mirrored source to the reference
    microphone (in samples); the bearing points from the array center at the
    wall, i.e. at the mirrored source.
    """
    z = array_height_m if array_height_m is not None else room_spec.dims_m[2] / 2.0
    center = np.array([pose.x_m, pose.y_m, z])
    ref_pos = mic_positions(geom, center, yaw=pose.heading_rad)[geom.reference_index - 1]
    lx, ly, _ = room_spec.dims_m
    mirrors = {
        "x=0": (np.array([-pose.x_m, pose.y_m, z]), pose.x_m),
        f"x={lx:g}": (np.array([2 * lx - pose.x_m, pose.y_m, z]), lx - pose.x_m),
        "y=0": (np.array([pose.x_m, -pose.y_m, z]), pose.y_m),
        f"y={ly:g}": (np.array([pose.x_m, 2 * ly - pose.y_m, z]), ly - pose.y_m),
    }
    echoes = []
    for wall, (mirror, wall_dist) in mirrors.items():
        path = float(np.linalg.norm(mirror - ref_pos))
        azimuth_world = math.atan2(mirror[1] - pose.y_m, mirror[0] - pose.x_m)
        echoes.append(
            WallEcho(
                wall=wall,
                tau_samples=path * geom.samples_per_meter,
                azimuth_world_rad=wrap_angle(azimuth_world),
                azimuth_array_rad=wrap_angle(azimuth_world - pose.heading_rad),
                wall_distance_m=wall_dist,
            )
        )
    return sorted(echoes, key=lambda e: e.tau_samples)


def probe_at_pose(
    pose: Pose,
    room_spec: room.RoomSpec,
    geom: ArrayGeometry,
    probe: ProbeSignal,
    noise: room.NoiseModel,
    cfg: toa.FreqDomainConfig,
    params: PipelineParams = PipelineParams(),
) -> tuple[toa.ToaEstimate, doa.DoaEstimate, EchoFeature]:
    """Probe the room once from ``pose`` and estimate the strongest echo.

    Deterministic for a fixed noise seed.  The beamformer covariance uses
    only the frames overlapping the echo-bearing segment implied by the
    delay estimate.
    """
    z = array_height(room_spec, params)
    center = np.array([pose.x_m, pose.y_m, z])
    if not room_spec.contains(center, margin=geom.radius_m):
        raise ValueError("pose leaves the array less than one radius from a wall")
    mics = mic_positions(geom, center, yaw=pose.heading_rad)
    length = int(round(params.rir_length_s * room_spec.sample_rate_hz))
    rirs = room.simulate_rir(room_spec, center, mics, length)
    rec = room.render_observation(rirs, probe, noise, geom)
    return estimate_from_recording(rec, geom, probe, cfg, params)


def analyze_recording(
    rec: room.MultichannelRecording,
    geom: ArrayGeometry,
    probe: ProbeSignal,
    cfg: toa.FreqDomainConfig,
    params: PipelineParams = PipelineParams(),
) -> tuple[toa.ToaEstimate, doa.SrpScanResult, EchoFeature]:
    """Direct-path removal, delay estimation, then azimuth scanning on an
    already rendered observation; keeps the full steered-power curve."""
    residual = room.direct_path_removal(rec, geom, probe)
    obs_spec = toa.to_spectrum(residual.channels[geom.reference_index - 1], cfg.dft_len)
    probe_spec = toa.to_spectrum(probe.samples, cfg.dft_len)
    toa_est = toa.estimate_toa(obs_spec, probe_spec, geom, cfg)

    frames = doa.stft(residual, params.frame_len)
    start = int(toa_est.tau)
    stop = min(start + probe.active_len, residual.length)
    selected = doa.slice_frames(frames, start, stop)
    cov = doa.regularize(doa.estimate_covariance(selected), params.reg_gamma)
    scan = doa.srp_scan(cov, geom, params.beam_grid)
    feature = EchoFeature(toa_delay=toa_est.tau, beam_power=scan.estimate.power)
    return toa_est, scan, feature


def estimate_from_recording(
    rec: room.MultichannelRecording,
    geom: ArrayGeometry,
    probe: ProbeSignal,
    cfg: toa.FreqDomainConfig,
    params: PipelineParams = PipelineParams(),
) -> tuple[toa.ToaEstimate, doa.DoaEstimate, EchoFeature]:
    """Like :func:`analyze_recording` but returning only the peak bearing."""
    toa_est, scan, feature = analyze_recording(rec, geom, probe, cfg, params)
    return toa_est, scan.estimate, feature
