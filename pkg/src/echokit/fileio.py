"""Deterministic artifact writers: WAV, raw float32, CSV, JSON, and SVG.

Every writer here is a pure function of its inputs (no timestamps, no
environment-dependent formatting), which is what lets whole CLI runs be
compared byte for byte.  Plots are minimal hand-rolled SVG rather than a
plotting library, both to keep the dependency surface small and because
library SVG output embeds nondeterministic metadata.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from echokit.mapping import SpatialMap, Trajectory
from echokit.room import MultichannelRecording


def write_wav(path, rec: MultichannelRecording) -> None:
    """Multichannel 32-bit float WAV; channels become columns."""
    wavfile.write(path, int(rec.sample_rate_hz), rec.channels.T.astype(np.float32))


def read_wav(path) -> MultichannelRecording:
    rate, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype != np.float32:
        raise ValueError(f"{path}: expected float32 WAV data, got {data.dtype}")
    return MultichannelRecording(channels=data.T.astype(float), sample_rate_hz=float(rate))


def write_raw_float32(path, rec: MultichannelRecording) -> None:
    """Interleaved little-endian float32 with a JSON sidecar next to it."""
    path = Path(path)
    rec.channels.T.astype("<f4").tofile(path)
    sidecar = {
        "format": "float32-le-interleaved",
        "channels": rec.mic_count,
        "sample_rate_hz": rec.sample_rate_hz,
        "frames": rec.length,
    }
    write_json(path.with_suffix(path.suffix + ".json"), sidecar)


def read_raw_float32(path) -> MultichannelRecording:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json"), "r", encoding="utf-8") as handle:
        sidecar = json.load(handle)
    data = np.fromfile(path, dtype="<f4").reshape(sidecar["frames"], sidecar["channels"])
    return MultichannelRecording(channels=data.T.astype(float), sample_rate_hz=float(sidecar["sample_rate_hz"]))


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, sort_keys=True, indent=2)
        handle.write("\n")


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])


def _format_cell(cell):
    if isinstance(cell, float):
        return repr(cell)
    return cell


# ---------------------------------------------------------------------------
# minimal SVG plotting


def _svg_header(width: int, height: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def svg_line_plot(path, series: dict[str, tuple[np.ndarray, np.ndarray]], title: str, xlabel: str, ylabel: str,
                  y_range: tuple[float, float] | None = None) -> None:
    """Line chart of one or more (x, y) series with a small legend."""
    width, height = 640, 420
    margin = 60
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    if y_range is not None:
        y_lo, y_hi = y_range
    else:
        y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(v):
        return margin + (v - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    parts = _svg_header(width, height)
    parts.append(
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" height="{height - 2 * margin}" '
        'fill="none" stroke="#444444" stroke-width="1"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{_fmt(sx(xv))}" y="{height - margin + 18}" font-size="11" text-anchor="middle" '
            f'fill="#222222">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{_fmt(sy(yv) + 4)}" font-size="11" text-anchor="end" '
            f'fill="#222222">{yv:.3g}</text>'
        )
    for i, (name, (x, y)) in enumerate(series.items()):
        color = colors[i % len(colors)]
        pts = " ".join(f"{_fmt(sx(float(xv)))},{_fmt(sy(float(yv)))}" for xv, yv in zip(x, y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for xv, yv in zip(x, y):
            parts.append(f'<circle cx="{_fmt(sx(float(xv)))}" cy="{_fmt(sy(float(yv)))}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{width - margin - 150}" y="{margin + 16 + 16 * i}" font-size="12" fill="{color}">{name}</text>'
        )
    parts.append(f'<text x="{width // 2}" y="24" font-size="14" text-anchor="middle" fill="#000000">{title}</text>')
    parts.append(
        f'<text x="{width // 2}" y="{height - 12}" font-size="12" text-anchor="middle" fill="#000000">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{height // 2}" font-size="12" text-anchor="middle" fill="#000000" '
        f'transform="rotate(-90 16 {height // 2})">{ylabel}</text>'
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def svg_map_overlay(path, spatial_map: SpatialMap, traj: Trajectory | None = None) -> None:
    """Room outline, optional trajectory, and reflector points; accepted
    points are solid dots, rejected ones hollow crosses."""
    lx, ly, _ = spatial_map.room.dims_m
    scale = 60.0
    margin = 40
    width = int(lx * scale) + 2 * margin
    height = int(ly * scale) + 2 * margin

    def sx(v):
        return margin + v * scale

    def sy(v):
        return height - margin - v * scale

    parts = _svg_header(width, height)
    parts.append(
        f'<rect x="{_fmt(sx(0.0))}" y="{_fmt(sy(ly))}" width="{_fmt(lx * scale)}" height="{_fmt(ly * scale)}" '
        'fill="none" stroke="#000000" stroke-width="2"/>'
    )
    if traj is not None:
        pts = " ".join(f"{_fmt(sx(p.x_m))},{_fmt(sy(p.y_m))}" for p in traj.poses)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#bbbbbb" stroke-width="1" stroke-dasharray="4 3"/>')
    for point in spatial_map.points:
        x, y = sx(point.x_m), sy(point.y_m)
        if point.accepted:
            parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3.5" fill="#1f77b4"/>')
        else:
            parts.append(
                f'<path d="M {_fmt(x - 3)} {_fmt(y - 3)} L {_fmt(x + 3)} {_fmt(y + 3)} '
                f'M {_fmt(x - 3)} {_fmt(y + 3)} L {_fmt(x + 3)} {_fmt(y - 3)}" '
                'stroke="#d62728" stroke-width="1.5" fill="none"/>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
