"""Command-line entry point.

Subcommands::

    echokit sim       --config c.json --out DIR     render recording + RIRs
    echokit estimate  --config c.json --recording F --out DIR
    echokit train     --config c.json --out DIR     dataset + CV + model
    echokit map       --config c.json --out DIR [--model M]
    echokit eval      --config c.json --sweep snr|t60 --out DIR [--time]

Every command is a pure function of (config, input files, seed): re-running
writes byte-identical artifacts, independent of ``--jobs``.  The optional
``--time`` report is the one exception, since it contains wall-clock
measurements.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from echokit import __version__, baseline, classifier, evaluation, fileio, mapping, pipeline, room
from echokit.config import ScenarioConfig, build_experiment_spec, build_trajectory, geometry_to_dict, load_config
from echokit.errors import ConfigError, NumericsError
from echokit.geometry import mic_positions
from echokit.seeding import derive_seed


def _load(args) -> ScenarioConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
        config.noise = room.with_seed(config.noise, args.seed)
    return config


def _manifest(out_dir: Path, command: str, config: ScenarioConfig, outputs: list[str]) -> None:
    fileio.write_json(
        out_dir / "manifest.json",
        {
            "tool": "echokit",
            "version": __version__,
            "command": command,
            "seed": config.seed,
            "config": config.raw,
            "outputs": sorted(outputs),
        },
    )


def cmd_sim(args) -> int:
    config = _load(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    z = pipeline.array_height(config.room, config.params)
    center = np.array([config.pose.x_m, config.pose.y_m, z])
    mics = mic_positions(config.geom, center, yaw=config.pose.heading_rad)
    length = int(round(config.params.rir_length_s * config.room.sample_rate_hz))
    rirs = room.simulate_rir(config.room, center, mics, length)
    rec = room.render_observation(rirs, config.probe, config.noise, config.geom)

    fileio.write_wav(out_dir / "recording.wav", rec)
    fileio.write_raw_float32(out_dir / "recording.f32", rec)
    rir_rec = room.MultichannelRecording(rirs.responses, rirs.sample_rate_hz)
    fileio.write_wav(out_dir / "rir.wav", rir_rec)
    fileio.write_raw_float32(out_dir / "rir.f32", rir_rec)
    fileio.write_json(out_dir / "geometry.json", geometry_to_dict(config.geom))
    _manifest(
        out_dir,
        "sim",
        config,
        ["recording.wav", "recording.f32", "recording.f32.json", "rir.wav", "rir.f32", "rir.f32.json", "geometry.json"],
    )
    return 0


def cmd_estimate(args) -> int:
    config = _load(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rec_path = Path(args.recording)
    rec = fileio.read_raw_float32(rec_path) if rec_path.suffix == ".f32" else fileio.read_wav(rec_path)
    toa_est, scan, feature = pipeline.analyze_recording(rec, config.geom, config.probe, config.cfg, config.params)
    rir_est = baseline.estimate_rir_dual_channel(rec.channels[config.geom.reference_index - 1], config.probe)
    base_est = baseline.peak_pick(rir_est, config.geom, config.cfg)
    fileio.write_json(
        out_dir / "estimates.json",
        {
            "tau_samples": toa_est.tau,
            "range_m": config.cfg.samples_to_range(toa_est.tau, config.geom),
            "gain": toa_est.gain,
            "score": toa_est.score,
            "at_boundary": toa_est.at_boundary,
            "azimuth_deg": math.degrees(scan.estimate.azimuth_rad),
            "beam_power": scan.estimate.power,
            "feature": {"toa_delay": feature.toa_delay, "beam_power": feature.beam_power},
            "baseline": {
                "tau_samples": base_est.tau,
                "range_m": config.cfg.samples_to_range(base_est.tau, config.geom),
                "gain": base_est.gain,
            },
        },
    )
    fileio.write_csv(
        out_dir / "srp_curve.csv",
        ["azimuth_deg", "power"],
        [(math.degrees(az), float(p)) for az, p in zip(scan.azimuths_rad, scan.powers)],
    )
    fileio.write_csv(out_dir / "baseline_rir.csv", ["tap", "value"], list(enumerate(rir_est.taps.tolist())))
    _manifest(out_dir, "estimate", config, ["estimates.json", "srp_curve.csv", "baseline_rir.csv"])
    return 0


def cmd_train(args) -> int:
    config = _load(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    c = config.classifier

    train_room = room.RoomSpec(
        dims_m=tuple(float(d) for d in c["room_dims_m"]),
        t60_s=float(c["t60_s"]),
        sample_rate_hz=config.geom.sample_rate_hz,
        speed_of_sound_mps=config.geom.speed_of_sound_mps,
    )
    samples = classifier.generate_dataset(
        train_room,
        c["grid_points"],
        tuple(float(v) for v in c["snr_range_db"]),
        config.seed,
        geom=config.geom,
        probe=config.probe,
        cfg=config.cfg,
        params=config.params,
        sdnr_db=config.noise.sdnr_db,
        include_diffuse=bool(c["include_diffuse"]),
        rotor_rps=config.noise.rotor_rps,
        margin_m=float(c["margin_m"]),
        jobs=args.jobs,
    )
    classifier.save_dataset(samples, out_dir / "dataset.csv")
    train_set, test_set = classifier.split_dataset(samples, float(c["split_ratio"]), config.seed)
    best_c, best_width, cv_acc = classifier.cross_validate(
        train_set, c["c_grid"], c["width_grid"], folds=c["folds"], seed=config.seed
    )
    model = classifier.train_svm(train_set, box_c=best_c, rbf_width=best_width)
    test_acc = classifier.evaluate(model, test_set)
    classifier.save_model(model, out_dir / "model.json")
    fileio.write_json(
        out_dir / "cv_report.json",
        {
            "dataset_size": len(samples),
            "train_size": len(train_set),
            "test_size": len(test_set),
            "folds": c["folds"],
            "best_c": best_c,
            "best_width": best_width,
            "cv_accuracy": cv_acc,
            "test_accuracy": test_acc,
            "support_vectors": int(model.dual_coeffs.shape[0]),
        },
    )
    _manifest(out_dir, "train", config, ["dataset.csv", "model.json", "cv_report.json"])
    print(f"dataset {len(samples)} -> train {len(train_set)} / test {len(test_set)}")
    print(f"cv best C={best_c} width={best_width} accuracy={cv_acc:.3f}; held-out accuracy={test_acc:.3f}")
    return 0


def cmd_map(args) -> int:
    config = _load(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = classifier.load_model(args.model) if args.model else None
    traj = build_trajectory(config)
    spatial_map = mapping.build_map(
        traj, config.room, config.geom, config.probe, config.noise, config.cfg,
        model=model, params=config.params, jobs=args.jobs,
    )
    metrics = mapping.map_metrics(spatial_map, tol_m=0.3)
    fileio.write_csv(
        out_dir / "map.csv",
        ["x_m", "y_m", "accepted", "pose_index"],
        [(p.x_m, p.y_m, int(p.accepted), p.source_pose) for p in spatial_map.points],
    )
    fileio.svg_map_overlay(out_dir / "map.svg", spatial_map, traj)
    fileio.write_json(
        out_dir / "map_metrics.json",
        {
            "wall_fraction": metrics.wall_fraction,
            "spurious_count": metrics.spurious_count,
            "accepted_count": metrics.accepted_count,
            "tolerance_m": 0.3,
            "classifier": bool(args.model),
        },
    )
    _manifest(out_dir, "map", config, ["map.csv", "map.svg", "map_metrics.json"])
    print(f"map: {metrics.accepted_count} accepted, wall_fraction {metrics.wall_fraction:.3f}")
    return 0


def cmd_eval(args) -> int:
    config = _load(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    sweep_variable = "snr_db" if args.sweep == "snr" else "t60_s"
    spec = build_experiment_spec(config, sweep_variable)
    curves = (
        evaluation.run_snr_sweep(spec, jobs=args.jobs)
        if sweep_variable == "snr_db"
        else evaluation.run_t60_sweep(spec, jobs=args.jobs)
    )
    values = np.asarray(spec.sweep_values)
    fileio.write_csv(
        out_dir / f"{args.sweep}_sweep.csv",
        [sweep_variable, "snls_toa", "snls_doa", "baseline_toa"],
        [
            (float(v), curves["snls_toa"].fractions[i], curves["snls_doa"].fractions[i], curves["baseline_toa"].fractions[i])
            for i, v in enumerate(values)
        ],
    )
    fileio.svg_line_plot(
        out_dir / f"{args.sweep}_sweep.svg",
        {name: (values, np.asarray(curve.fractions)) for name, curve in curves.items()},
        title=f"accuracy vs {sweep_variable}",
        xlabel=sweep_variable,
        ylabel="hit fraction",
        y_range=(0.0, 1.0),
    )
    outputs = [f"{args.sweep}_sweep.csv", f"{args.sweep}_sweep.svg"]
    if args.time:
        report = evaluation.time_methods(spec)
        fileio.write_json(
            out_dir / "timing.json",
            {
                "machine": report.machine,
                "trials": report.trials,
                "snls_mean_s": report.snls_mean_s,
                "baseline_mean_s": report.baseline_mean_s,
                "baseline_faster": report.ordering_ok,
            },
        )
        outputs.append("timing.json")
        print(f"timing: baseline {report.baseline_mean_s*1e3:.2f} ms vs snls {report.snls_mean_s*1e3:.2f} ms")
    _manifest(out_dir, f"eval-{args.sweep}", config, outputs)
    for name, curve in curves.items():
        print(name, " ".join(f"{v:g}:{f:.2f}" for v, f in zip(values, curve.fractions)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echokit", description="acoustic echo mapping toolkit")
    parser.add_argument("--version", action="version", version=f"echokit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, recording=False, model=False, sweep=False):
        p.add_argument("--config", required=True, help="scenario JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (output independent of N)")
        if recording:
            p.add_argument("--recording", required=True, help="input recording (.wav or .f32)")
        if model:
            p.add_argument("--model", default=None, help="trained classifier JSON")
        if sweep:
            p.add_argument("--sweep", choices=("snr", "t60"), required=True)
            p.add_argument("--time", action="store_true", help="also write a (non-reproducible) timing report")

    common(sub.add_parser("sim", help="render a recording at the configured pose"))
    common(sub.add_parser("estimate", help="estimate echo delay and bearing from a recording"), recording=True)
    common(sub.add_parser("train", help="generate the dataset and train the classifier"))
    common(sub.add_parser("map", help="drive the trajectory and assemble the map"), model=True)
    common(sub.add_parser("eval", help="run a Monte Carlo sweep"), sweep=True)
    return parser


_COMMANDS = {
    "sim": cmd_sim,
    "estimate": cmd_estimate,
    "train": cmd_train,
    "map": cmd_map,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
