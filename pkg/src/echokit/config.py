"""Scenario configuration: one strict JSON document drives every command.

Unknown fields are rejected (typos in experiment definitions should fail
loudly), and cross-field consistency is checked up front with diagnostics
that name the offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from echokit import doa, evaluation, pipeline, room, toa
from echokit.errors import ConfigError
from echokit.geometry import ArrayGeometry, Pose, ProbeSignal, generate_probe

CONFIG_VERSION = 1


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _section(doc: dict, name: str, schema: dict, where: str = "") -> dict:
    """Apply defaults and reject unknown keys; returns the merged section."""
    raw = doc.get(name, {})
    prefix = f"{where}{name}"
    _require(isinstance(raw, dict), f"{prefix}: must be an object")
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"{prefix}.{sorted(unknown)[0]}: unknown field")
    return {key: raw.get(key, default) for key, default in schema.items()}


@dataclass
class ScenarioConfig:
    """Parsed, validated scenario ready to hand to the library."""

    seed: int
    room: room.RoomSpec
    geom: ArrayGeometry
    probe: ProbeSignal
    noise: room.NoiseModel
    cfg: toa.FreqDomainConfig
    params: pipeline.PipelineParams
    pose: Pose
    trajectory: dict
    classifier: dict
    experiment: dict
    raw: dict = field(repr=False, default_factory=dict)


_TOP_LEVEL = {
    "version",
    "seed",
    "room",
    "geometry",
    "probe",
    "noise",
    "estimator",
    "beam_grid",
    "sim",
    "trajectory",
    "classifier",
    "experiment",
}


def parse_config(doc: dict) -> ScenarioConfig:
    _require(isinstance(doc, dict), "config: must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown field")
    _require(doc.get("version") == CONFIG_VERSION, f"version: expected {CONFIG_VERSION}")
    seed = doc.get("seed", 0)
    _require(isinstance(seed, int), "seed: must be an integer")

    g = _section(doc, "geometry", {
        "mic_count": 6,
        "radius_m": 0.2,
        "offset_angle_rad": 0.0,
        "reference_index": 1,
        "sample_rate_hz": 22050.0,
        "speed_of_sound_mps": 343.0,
    })
    _require(isinstance(g["mic_count"], int) and g["mic_count"] >= 2, "geometry.mic_count: need an integer >= 2")
    _require(g["radius_m"] > 0, "geometry.radius_m: must be positive")
    _require(g["sample_rate_hz"] > 0, "geometry.sample_rate_hz: must be positive")
    _require(g["speed_of_sound_mps"] > 0, "geometry.speed_of_sound_mps: must be positive")
    _require(1 <= g["reference_index"] <= g["mic_count"], "geometry.reference_index: out of range")
    geom = ArrayGeometry(
        mic_count=g["mic_count"],
        radius_m=float(g["radius_m"]),
        offset_angle_rad=float(g["offset_angle_rad"]),
        reference_index=g["reference_index"],
        sample_rate_hz=float(g["sample_rate_hz"]),
        speed_of_sound_mps=float(g["speed_of_sound_mps"]),
    )

    r = _section(doc, "room", {"dims_m": [10.0, 8.0, 5.0], "t60_s": 0.6})
    _require(
        isinstance(r["dims_m"], list) and len(r["dims_m"]) == 3 and all(d > 0 for d in r["dims_m"]),
        "room.dims_m: need three positive lengths",
    )
    _require(r["t60_s"] >= 0, "room.t60_s: must be nonnegative")
    room_spec = room.RoomSpec(
        dims_m=tuple(float(d) for d in r["dims_m"]),
        t60_s=float(r["t60_s"]),
        sample_rate_hz=geom.sample_rate_hz,
        speed_of_sound_mps=geom.speed_of_sound_mps,
    )

    p = _section(doc, "probe", {"active_len": 1500, "total_len": 20000, "seed": 7})
    _require(0 < p["active_len"] <= p["total_len"], "probe.active_len: need 0 < active_len <= total_len")
    probe = generate_probe(p["active_len"], p["total_len"], geom.sample_rate_hz, p["seed"])

    n = _section(doc, "noise", {"snr_db": 10.0, "sdnr_db": 40.0, "rotor_rps": 70.0})
    for key in ("snr_db", "sdnr_db"):
        _require(not (isinstance(n[key], float) and math.isnan(n[key])), f"noise.{key}: must not be NaN")
    _require(n["rotor_rps"] > 0, "noise.rotor_rps: must be positive")
    noise = room.NoiseModel(
        snr_db=float(n["snr_db"]), sdnr_db=float(n["sdnr_db"]), rotor_rps=float(n["rotor_rps"]), seed=seed
    )

    e = _section(doc, "estimator", {
        "dft_len": None,
        "search_min_m": 1.0,
        "search_max_m": 2.0,
        "grid_step_samples": 1.0,
        "round_trip": True,
    })
    dft_len = e["dft_len"] if e["dft_len"] is not None else toa.default_dft_len(probe.total_len)
    _require(isinstance(dft_len, int) and dft_len >= probe.total_len, "estimator.dft_len: must cover the observation")
    _require(0 < e["search_min_m"] < e["search_max_m"], "estimator.search_min_m: need 0 < min < max")
    _require(e["grid_step_samples"] > 0, "estimator.grid_step_samples: must be positive")
    cfg = toa.FreqDomainConfig(
        dft_len=dft_len,
        search_min_m=float(e["search_min_m"]),
        search_max_m=float(e["search_max_m"]),
        grid_step_samples=float(e["grid_step_samples"]),
        round_trip=bool(e["round_trip"]),
    )
    try:
        toa.tau_grid(cfg, geom)
    except ValueError as exc:
        raise ConfigError(f"estimator.search_min_m: {exc}") from exc

    b = _section(doc, "beam_grid", {
        "azimuth_step_deg": 1.0,
        "elevation_deg": 90.0,
        "band_hz": [300.0, 8000.0],
        "frame_len": 882,
        "reg_gamma": 0.1,
    })
    _require(b["azimuth_step_deg"] > 0, "beam_grid.azimuth_step_deg: must be positive")
    _require(
        isinstance(b["band_hz"], list) and len(b["band_hz"]) == 2 and 0 <= b["band_hz"][0] < b["band_hz"][1],
        "beam_grid.band_hz: need an increasing nonnegative pair",
    )
    _require(b["band_hz"][1] <= geom.sample_rate_hz / 2, "beam_grid.band_hz: exceeds the Nyquist frequency")
    _require(isinstance(b["frame_len"], int) and b["frame_len"] > 0 and b["frame_len"] % 2 == 0,
             "beam_grid.frame_len: need a positive even integer")
    _require(0 <= b["reg_gamma"] <= 1, "beam_grid.reg_gamma: must lie in [0, 1]")
    try:
        beam_grid = doa.BeamGrid(
            azimuth_step_rad=math.radians(b["azimuth_step_deg"]),
            elevation_rad=math.radians(b["elevation_deg"]),
            band_hz=(float(b["band_hz"][0]), float(b["band_hz"][1])),
        )
    except ValueError as exc:
        raise ConfigError(f"beam_grid.azimuth_step_deg: {exc}") from exc

    s = _section(doc, "sim", {"pose": [1.35, 1.4, -135.0], "array_height_m": None, "rir_length_s": 0.35})
    _require(isinstance(s["pose"], list) and len(s["pose"]) == 3, "sim.pose: need [x_m, y_m, heading_deg]")
    _require(s["rir_length_s"] > 0, "sim.rir_length_s: must be positive")
    pose = Pose(float(s["pose"][0]), float(s["pose"][1]), math.radians(float(s["pose"][2])))
    _require(
        geom.radius_m < pose.x_m < room_spec.dims_m[0] - geom.radius_m
        and geom.radius_m < pose.y_m < room_spec.dims_m[1] - geom.radius_m,
        "sim.pose: must sit inside the room with one array radius of clearance",
    )
    height = s["array_height_m"]
    if height is not None:
        _require(0 < height < room_spec.dims_m[2], "sim.array_height_m: must sit inside the room")
    params = pipeline.PipelineParams(
        beam_grid=beam_grid,
        frame_len=b["frame_len"],
        reg_gamma=float(b["reg_gamma"]),
        rir_length_s=float(s["rir_length_s"]),
        array_height_m=height,
    )
    _require(probe.total_len >= params.frame_len, "probe.total_len: shorter than one beamformer frame")

    t = _section(doc, "trajectory", {
        "kind": "wall_following",
        "margin_m": 1.5,
        "spacing_m": 0.5,
        "cross": False,
        "poses": None,
    })
    _require(t["kind"] in ("wall_following", "explicit"), "trajectory.kind: unknown kind")
    if t["kind"] == "explicit":
        _require(isinstance(t["poses"], list) and t["poses"], "trajectory.poses: need a nonempty pose list")

    c = _section(doc, "classifier", {
        "grid_points": 1989,
        "snr_range_db": [-40.0, 40.0],
        "room_dims_m": [10.0, 8.0, 7.0],
        "t60_s": 0.6,
        "split_ratio": 0.8,
        "folds": 5,
        "c_grid": [0.1, 1.0, 10.0, 100.0],
        "width_grid": [0.01, 0.1, 1.0, 10.0],
        "include_diffuse": True,
        "margin_m": 0.5,
    })
    _require(isinstance(c["grid_points"], int) and c["grid_points"] >= 2, "classifier.grid_points: need an integer >= 2")
    _require(
        isinstance(c["snr_range_db"], list) and len(c["snr_range_db"]) == 2 and c["snr_range_db"][0] < c["snr_range_db"][1],
        "classifier.snr_range_db: need an increasing pair",
    )
    _require(0 < c["split_ratio"] < 1, "classifier.split_ratio: must lie strictly between 0 and 1")
    _require(isinstance(c["folds"], int) and c["folds"] >= 2, "classifier.folds: need an integer >= 2")
    _require(c["margin_m"] >= geom.radius_m, "classifier.margin_m: must be at least the array radius")

    x = _section(doc, "experiment", {
        "sweep_variable": "snr_db",
        "snr_values_db": list(evaluation.SNR_SWEEP_DEFAULT),
        "t60_values_s": list(evaluation.T60_SWEEP_DEFAULT),
        "trials": 50,
        "fixed_snr_db": 10.0,
        "toa_tol_samples": 5.0,
        "doa_tol_steps": 5,
    })
    _require(x["sweep_variable"] in ("snr_db", "t60_s"), "experiment.sweep_variable: must be snr_db or t60_s")
    _require(isinstance(x["trials"], int) and x["trials"] >= 1, "experiment.trials: need an integer >= 1")
    _require(x["toa_tol_samples"] > 0, "experiment.toa_tol_samples: must be positive")
    _require(isinstance(x["doa_tol_steps"], int) and x["doa_tol_steps"] > 0, "experiment.doa_tol_steps: positive integer")

    return ScenarioConfig(
        seed=seed,
        room=room_spec,
        geom=geom,
        probe=probe,
        noise=noise,
        cfg=cfg,
        params=params,
        pose=pose,
        trajectory=t,
        classifier=c,
        experiment=x,
        raw=doc,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    return parse_config(doc)


def geometry_to_dict(geom: ArrayGeometry) -> dict:
    return {
        "mic_count": geom.mic_count,
        "radius_m": geom.radius_m,
        "offset_angle_rad": geom.offset_angle_rad,
        "reference_index": geom.reference_index,
        "sample_rate_hz": geom.sample_rate_hz,
        "speed_of_sound_mps": geom.speed_of_sound_mps,
    }


def geometry_from_dict(doc: dict) -> ArrayGeometry:
    return ArrayGeometry(
        mic_count=int(doc["mic_count"]),
        radius_m=float(doc["radius_m"]),
        offset_angle_rad=float(doc["offset_angle_rad"]),
        reference_index=int(doc["reference_index"]),
        sample_rate_hz=float(doc["sample_rate_hz"]),
        speed_of_sound_mps=float(doc["speed_of_sound_mps"]),
    )


def build_trajectory(config: ScenarioConfig):
    from echokit import mapping

    t = config.trajectory
    if t["kind"] == "explicit":
        poses = [Pose(float(p[0]), float(p[1]), math.radians(float(p[2]))) for p in t["poses"]]
        return mapping.Trajectory(poses=poses)
    return mapping.wall_following_trajectory(
        config.room, margin_m=float(t["margin_m"]), spacing_m=float(t["spacing_m"]), cross=bool(t["cross"])
    )


def build_experiment_spec(config: ScenarioConfig, sweep_variable: str | None = None) -> evaluation.ExperimentSpec:
    x = config.experiment
    if sweep_variable is None:
        sweep_variable = x["sweep_variable"]
    values = x["snr_values_db"] if sweep_variable == "snr_db" else x["t60_values_s"]
    return evaluation.ExperimentSpec(
        room=config.room,
        geom=config.geom,
        sweep_variable=sweep_variable,
        sweep_values=tuple(float(v) for v in values),
        trials=x["trials"],
        seed=config.seed,
        toa_tol_samples=float(x["toa_tol_samples"]),
        doa_tol_steps=x["doa_tol_steps"],
        pose=config.pose,
        fixed_snr_db=float(x["fixed_snr_db"]),
        sdnr_db=config.noise.sdnr_db,
        rotor_rps=config.noise.rotor_rps,
        probe_active_len=config.probe.active_len,
        probe_total_len=config.probe.total_len,
        probe_seed=config.probe.rng_seed,
        cfg=config.cfg,
        params=config.params,
    )
