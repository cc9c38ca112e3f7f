"""Uniform circular array geometry, probe signals, and far-field delay math.

Conventions used throughout the package:

* azimuth is measured counterclockwise from the world x-axis, in radians;
* elevation ``pi/2`` means horizontal (in-plane) propagation, ``0`` is
  straight up, so in-plane sources produce the largest inter-microphone
  delays;
* microphone indices are 1-based, microphone 1 being the reference;
* delays are real (fractional) sample counts, quantized only where an
  operation explicitly needs integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (angle + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform circular microphone array with a center-mounted loudspeaker.

    Microphone m sits at angle ``offset_angle_rad + 2*pi*(m-1)/mic_count``
    on a circle of ``radius_m`` around the array center.
    """

    mic_count: int
    radius_m: float
    offset_angle_rad: float = 0.0
    reference_index: int = 1
    sample_rate_hz: float = 22050.0
    speed_of_sound_mps: float = 343.0

    def __post_init__(self):
        if self.mic_count < 2:
            raise ValueError("mic_count must be at least 2")
        if self.radius_m <= 0:
            raise ValueError("radius_m must be positive")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.speed_of_sound_mps <= 0:
            raise ValueError("speed_of_sound_mps must be positive")
        if not 1 <= self.reference_index <= self.mic_count:
            raise ValueError("reference_index out of range")

    @property
    def samples_per_meter(self) -> float:
        return self.sample_rate_hz / self.speed_of_sound_mps

    def mic_angle(self, mic: int) -> float:
        """World-frame angle of microphone ``mic`` (1-based), unwrapped."""
        if not 1 <= mic <= self.mic_count:
            raise ValueError(f"microphone index {mic} out of range 1..{self.mic_count}")
        return self.offset_angle_rad + TWO_PI * (mic - 1) / self.mic_count

    def mic_angles(self) -> np.ndarray:
        return self.offset_angle_rad + TWO_PI * np.arange(self.mic_count) / self.mic_count


@dataclass(frozen=True)
class ProbeSignal:
    """Known loudspeaker signal: a white Gaussian burst with zero padding."""

    samples: np.ndarray
    active_len: int
    sample_rate_hz: float
    rng_seed: int

    def __post_init__(self):
        self.samples.setflags(write=False)

    @property
    def total_len(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class Pose:
    """Planar robot pose; heading is the world-frame yaw of the array's
    zero-angle axis, normalized to [-pi, pi)."""

    x_m: float
    y_m: float
    heading_rad: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading_rad", wrap_angle(self.heading_rad))


def mic_positions(geom: ArrayGeometry, center, yaw: float = 0.0) -> np.ndarray:
    """3-D microphone positions for an array centered at ``center``.

    ``yaw`` rotates the whole array in the horizontal plane (robot heading).
    Returns an (M, 3) array; row m-1 is microphone m.
    """
    center = np.asarray(center, dtype=float)
    if center.shape != (3,):
        raise ValueError("center must be a 3-D point")
    angles = geom.mic_angles() + yaw
    pos = np.tile(center, (geom.mic_count, 1))
    pos[:, 0] += geom.radius_m * np.cos(angles)
    pos[:, 1] += geom.radius_m * np.sin(angles)
    return pos


def tdoa(geom: ArrayGeometry, azimuth_rad: float, elevation_rad: float, mic: int) -> float:
    """Far-field delay of microphone ``mic`` relative to the reference, in samples.

    Positive means the wavefront reaches ``mic`` after the reference
    microphone.  Zero for the reference itself and for vertical incidence.
    """
    theta_m = geom.mic_angle(mic)
    if mic == geom.reference_index:
        return 0.0
    theta_1 = geom.mic_angle(geom.reference_index)
    return (
        geom.radius_m
        * math.sin(elevation_rad)
        * (math.cos(theta_1 - azimuth_rad) - math.cos(theta_m - azimuth_rad))
        * geom.samples_per_meter
    )


def tdoa_vector(geom: ArrayGeometry, azimuth_rad, elevation_rad) -> np.ndarray:
    """Vectorized :func:`tdoa` for all microphones.

    ``azimuth_rad`` may be a scalar (result shape (M,)) or a 1-D array of A
    candidate azimuths (result shape (M, A)).
    """
    azimuth = np.atleast_1d(np.asarray(azimuth_rad, dtype=float))
    theta = geom.mic_angles()
    theta_1 = geom.mic_angle(geom.reference_index)
    diff = np.cos(theta_1 - azimuth)[None, :] - np.cos(theta[:, None] - azimuth[None, :])
    out = geom.radius_m * math.sin(elevation_rad) * diff * geom.samples_per_meter
    if np.ndim(azimuth_rad) == 0:
        return out[:, 0]
    return out


def steering_vector(
    geom: ArrayGeometry, azimuth_rad: float, elevation_rad: float, dft_bin: int, dft_len: int
) -> np.ndarray:
    """Unit-modulus phase response of the array toward (azimuth, elevation).

    Element m is ``exp(-j*2*pi*f_k/dft_len * tdoa_m)`` with ``f_k`` the
    signed FFT bin frequency (bins above dft_len/2 alias to negative
    frequencies), so steering at bin K-k is the conjugate of steering at
    bin k, as required for real signals.  The reference element is exactly 1.
    """
    if not 0 <= dft_bin < dft_len:
        raise ValueError(f"dft_bin {dft_bin} out of range 0..{dft_len - 1}")
    signed_bin = dft_bin if dft_bin <= dft_len // 2 else dft_bin - dft_len
    delays = tdoa_vector(geom, float(azimuth_rad), elevation_rad)
    return np.exp(-2j * math.pi * signed_bin / dft_len * delays)


def generate_probe(active_len: int, total_len: int, sample_rate_hz: float, seed: int) -> ProbeSignal:
    """White Gaussian probe burst of ``active_len`` samples, zero padded to
    ``total_len``.  Deterministic for a fixed seed."""
    if active_len <= 0 or total_len < active_len:
        raise ValueError("need 0 < active_len <= total_len")
    rng = np.random.default_rng(seed)
    samples = np.zeros(total_len)
    samples[:active_len] = rng.standard_normal(active_len)
    return ProbeSignal(samples=samples, active_len=active_len, sample_rate_hz=sample_rate_hz, rng_seed=seed)
