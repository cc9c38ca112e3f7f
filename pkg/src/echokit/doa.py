"""STFT front end, per-bin covariance, and MPDR steered-response scanning.

The azimuth estimator computes, for every candidate direction, the output
power of a minimum-power distortionless beamformer summed over a frequency
band, and picks the direction of maximal power.  Covariance matrices are
shrunk toward a scaled identity before inversion to keep the beamformer
well conditioned under estimation error and reverberation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from echokit.errors import NumericsError
from echokit.geometry import ArrayGeometry, tdoa_vector, wrap_angle
from echokit.room import MultichannelRecording

DEFAULT_FRAME_LEN = 882
DEFAULT_REG_GAMMA = 0.1


@dataclass
class StftFrames:
    """Windowed short-time spectra, shape (frames, channels, bins).

    Frames are Hann windowed at fifty percent overlap; ``bins`` covers the
    nonnegative frequencies of a ``frame_len``-point DFT.
    """

    frames: np.ndarray
    frame_len: int
    hop: int
    window: str = "hann"

    def __post_init__(self):
        if self.hop * 2 != self.frame_len:
            raise ValueError("hop must be half the frame length")
        if self.window != "hann":
            raise ValueError("only the Hann window is supported")
        if self.frames.ndim != 3:
            raise ValueError("frames must be (time, channel, bin)")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def n_bins(self) -> int:
        return self.frames.shape[2]


@dataclass
class BinCovariance:
    """Per-bin spatial covariance matrices, shape (bins, M, M)."""

    matrices: np.ndarray
    frame_count: int

    @property
    def n_bins(self) -> int:
        return self.matrices.shape[0]

    @property
    def mic_count(self) -> int:
        return self.matrices.shape[1]

    @property
    def dft_len(self) -> int:
        return 2 * (self.n_bins - 1)


@dataclass(frozen=True)
class BeamGrid:
    """Azimuth search grid: fixed elevation, uniform azimuth step, and the
    frequency band whose per-bin powers are summed."""

    azimuth_step_rad: float = math.pi / 180.0
    elevation_rad: float = math.pi / 2.0
    band_hz: tuple[float, float] = (300.0, 8000.0)

    def __post_init__(self):
        turns = 2.0 * math.pi / self.azimuth_step_rad
        if abs(turns - round(turns)) > 1e-9:
            raise ValueError("azimuth_step_rad must divide the full circle")
        if not 0 <= self.band_hz[0] < self.band_hz[1]:
            raise ValueError("band_hz must be an increasing nonnegative pair")

    def azimuths(self) -> np.ndarray:
        count = int(round(2.0 * math.pi / self.azimuth_step_rad))
        return -math.pi + self.azimuth_step_rad * np.arange(count)


@dataclass(frozen=True)
class DoaEstimate:
    """Azimuth of maximal steered power, wrapped to [-pi, pi)."""

    azimuth_rad: float
    power: float


@dataclass
class SrpScanResult:
    estimate: DoaEstimate
    azimuths_rad: np.ndarray
    powers: np.ndarray


def _window(frame_len: int) -> np.ndarray:
    return np.hanning(frame_len)


def stft(rec: MultichannelRecording, frame_len: int = DEFAULT_FRAME_LEN, hop: int | None = None) -> StftFrames:
    """Hann-windowed 50 percent overlap short-time transform of a recording."""
    if hop is None:
        hop = frame_len // 2
    if rec.length < frame_len:
        raise ValueError("recording is shorter than one frame")
    window = _window(frame_len)
    n_frames = 1 + (rec.length - frame_len) // hop
    segments = np.stack([rec.channels[:, t * hop : t * hop + frame_len] for t in range(n_frames)])
    return StftFrames(frames=np.fft.rfft(segments * window, axis=-1), frame_len=frame_len, hop=hop)


def istft(frames: StftFrames, length: int | None = None) -> np.ndarray:
    """Overlap-add inverse of :func:`stft`, normalized by the summed window.

    Reconstruction is exact (to rounding) wherever the analysis windows
    fully cover the signal; the first and last half frames taper.
    """
    window = _window(frames.frame_len)
    n = (frames.frame_count - 1) * frames.hop + frames.frame_len
    out = np.zeros((frames.frames.shape[1], n))
    norm = np.zeros(n)
    time_frames = np.fft.irfft(frames.frames, frames.frame_len, axis=-1)
    for t in range(frames.frame_count):
        sl = slice(t * frames.hop, t * frames.hop + frames.frame_len)
        out[:, sl] += time_frames[t]
        norm[sl] += window
    out /= np.maximum(norm, 1e-12)
    return out[:, :length] if length is not None else out


def slice_frames(frames: StftFrames, start_sample: int, stop_sample: int) -> StftFrames:
    """Frames whose span overlaps the sample interval [start, stop)."""
    if stop_sample <= start_sample:
        raise ValueError("empty sample interval")
    starts = np.arange(frames.frame_count) * frames.hop
    keep = (starts < stop_sample) & (starts + frames.frame_len > start_sample)
    if not np.any(keep):
        raise ValueError("no frames overlap the requested interval")
    return StftFrames(frames=frames.frames[keep], frame_len=frames.frame_len, hop=frames.hop)


def estimate_covariance(frames: StftFrames) -> BinCovariance:
    """Per-bin sample covariance averaged over frames, forced Hermitian."""
    if frames.frame_count < 1:
        raise ValueError("need at least one frame")
    r = np.einsum("tmk,tnk->kmn", frames.frames, np.conj(frames.frames)) / frames.frame_count
    r = 0.5 * (r + np.conj(np.swapaxes(r, -1, -2)))
    return BinCovariance(matrices=r, frame_count=frames.frame_count)


def regularize(cov: BinCovariance, gamma: float) -> BinCovariance:
    """Shrink each covariance toward a scaled identity, preserving the trace:
    ``(1 - gamma) R + gamma (tr R / M) I``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    m = cov.mic_count
    traces = np.real(np.trace(cov.matrices, axis1=-2, axis2=-1))
    eye = np.eye(m)
    out = (1.0 - gamma) * cov.matrices + (gamma / m) * traces[:, None, None] * eye[None, :, :]
    return BinCovariance(matrices=out, frame_count=cov.frame_count)


def mpdr_weights(cov_bin: np.ndarray, steer: np.ndarray) -> np.ndarray:
    """Minimum-power distortionless weights ``R^-1 d / (d^H R^-1 d)``.

    Raises :class:`NumericsError` when the matrix is not positive definite,
    which happens for degenerate input that was never regularized.
    """
    try:
        factor = cho_factor(cov_bin, lower=True)
    except LinAlgError as exc:
        raise NumericsError("covariance matrix is singular; regularize first") from exc
    x = cho_solve(factor, steer)
    denom = np.vdot(steer, x)
    if not np.isfinite(denom.real) or denom.real <= 0:
        raise NumericsError("covariance matrix is numerically indefinite")
    return x / denom


def srp_scan(cov: BinCovariance, geom: ArrayGeometry, grid: BeamGrid) -> SrpScanResult:
    """Broadband steered-power scan over the azimuth grid.

    For each azimuth the per-bin MPDR output power ``1 / (d^H R^-1 d)`` is
    summed over the configured band; ties at the maximum break toward the
    smaller azimuth.
    """
    azimuths = grid.azimuths()
    if azimuths.size == 0:
        raise ValueError("empty azimuth grid")
    dft_len = cov.dft_len
    freqs = np.arange(cov.n_bins) * geom.sample_rate_hz / dft_len
    band = (freqs >= grid.band_hz[0]) & (freqs <= grid.band_hz[1])
    if not np.any(band):
        raise ValueError("no bins fall inside the requested band")

    delays = tdoa_vector(geom, azimuths, grid.elevation_rad)  # (M, A)
    bins = np.nonzero(band)[0]
    steer = np.exp(-2j * math.pi / dft_len * bins[:, None, None] * delays[None, :, :])  # (B, M, A)
    try:
        solved = np.linalg.solve(cov.matrices[band], steer)
    except np.linalg.LinAlgError as exc:
        raise NumericsError("covariance matrix is singular; regularize first") from exc
    denom = np.real(np.einsum("kma,kma->ka", np.conj(steer), solved))
    if np.any(denom <= 0):
        raise NumericsError("covariance matrix is numerically indefinite")
    powers = np.sum(1.0 / denom, axis=0)
    best = int(np.argmax(powers))
    estimate = DoaEstimate(azimuth_rad=wrap_angle(float(azimuths[best])), power=float(powers[best]))
    return SrpScanResult(estimate=estimate, azimuths_rad=azimuths, powers=powers)
