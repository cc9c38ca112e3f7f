"""Frequency-domain nonlinear least-squares echo delay estimation.

A single reflection of the known probe is a delayed, scaled copy of its
spectrum, so the least-squares gain at a candidate delay has a closed form
and the delay itself comes from a grid search of the correlation objective.
Multiple reflections are handled sequentially: estimate the strongest
component, subtract it, repeat, then refine each component once against the
residual of the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from echokit.geometry import ArrayGeometry


@dataclass(frozen=True)
class FreqDomainConfig:
    """Search configuration for the delay estimator.

    The interval is stated in meters of reflector range; ``round_trip=True``
    (the default) maps range r to a delay of ``2 r fs / c`` samples, i.e. the
    probe travels out and back.  ``round_trip=False`` reads the interval as
    total path length instead.
    """

    dft_len: int
    search_min_m: float = 1.0
    search_max_m: float = 2.0
    grid_step_samples: float = 1.0
    round_trip: bool = True

    def __post_init__(self):
        if self.dft_len < 1:
            raise ValueError("dft_len must be positive")
        if not 0 < self.search_min_m < self.search_max_m:
            raise ValueError("need 0 < search_min_m < search_max_m")
        if self.grid_step_samples <= 0:
            raise ValueError("grid_step_samples must be positive")

    def range_to_samples(self, range_m: float, geom: ArrayGeometry) -> float:
        factor = 2.0 if self.round_trip else 1.0
        return factor * range_m * geom.samples_per_meter

    def samples_to_range(self, tau_samples: float, geom: ArrayGeometry) -> float:
        factor = 2.0 if self.round_trip else 1.0
        return tau_samples / (factor * geom.samples_per_meter)


@dataclass(frozen=True)
class ToaEstimate:
    """Estimated delay (samples), gain, and the objective value at the peak.

    ``at_boundary`` flags an argmax sitting on an edge of the search grid,
    which usually means the echo lives outside the configured interval.
    """

    tau: float
    gain: float
    score: float
    at_boundary: bool = False


def default_dft_len(observation_len: int) -> int:
    """Smallest power of two not below the observation length."""
    return 1 << max(0, (observation_len - 1).bit_length())


def to_spectrum(samples: np.ndarray, dft_len: int) -> np.ndarray:
    """Zero-padded full-length DFT of a real signal."""
    samples = np.asarray(samples, dtype=float)
    if dft_len < samples.shape[0]:
        raise ValueError("dft_len must cover the signal")
    return np.fft.fft(samples, dft_len)


def tau_grid(cfg: FreqDomainConfig, geom: ArrayGeometry) -> np.ndarray:
    """Candidate delays (samples) covering the configured range interval."""
    lo = cfg.range_to_samples(cfg.search_min_m, geom)
    hi = cfg.range_to_samples(cfg.search_max_m, geom)
    first = math.ceil(lo / cfg.grid_step_samples) * cfg.grid_step_samples
    count = int(math.floor((hi - first) / cfg.grid_step_samples)) + 1
    if count < 1:
        raise ValueError("search grid is empty for this interval and step")
    return first + cfg.grid_step_samples * np.arange(count)


def delay_phasor(tau: float, cfg: FreqDomainConfig) -> np.ndarray:
    """Per-bin phase ramp that delays a spectrum by ``tau`` samples."""
    k = np.arange(cfg.dft_len)
    return np.exp(-2j * math.pi * tau * k / cfg.dft_len)


def estimate_gain(obs_spectrum: np.ndarray, tau: float, probe_spectrum: np.ndarray, cfg: FreqDomainConfig) -> float:
    """Least-squares gain of a single delayed probe copy at delay ``tau``.

    Closed form: Re{Y^H Zbar} / (Zbar^H Zbar) with Zbar the delayed probe
    spectrum; real by construction and exact in the noiseless case.
    """
    zbar = delay_phasor(tau, cfg) * probe_spectrum
    denom = float(np.real(np.vdot(zbar, zbar)))
    if denom <= 0.0:
        raise ValueError("zero-energy probe leaves the gain undefined")
    return float(np.real(np.vdot(obs_spectrum, zbar))) / denom


def correlation_objective(
    obs_spectrum: np.ndarray, probe_spectrum: np.ndarray, taus: np.ndarray, cfg: FreqDomainConfig
) -> np.ndarray:
    """Delay-search objective Re{Y^H Zbar(tau)} / K over a grid of delays.

    The 1/K normalization makes the value equal the time-domain cross
    correlation of the observation with the delayed probe at integer delays.
    Evaluated per grid point with an incremental phase ramp, so the cost is
    one complex pass over the spectrum per candidate delay.
    """
    taus = np.asarray(taus, dtype=float)
    k = cfg.dft_len
    weights = np.conj(obs_spectrum) * probe_spectrum
    out = np.empty(taus.shape[0])
    steps = np.diff(taus)
    uniform = taus.shape[0] > 1 and np.allclose(steps, steps[0], rtol=0.0, atol=1e-9)
    if uniform:
        phasor = delay_phasor(float(taus[0]), cfg)
        ratio = np.exp(-2j * math.pi * float(steps[0]) * np.arange(k) / k)
        for i in range(taus.shape[0]):
            out[i] = np.real(phasor @ weights) / k
            phasor = phasor * ratio
    else:
        for i, tau in enumerate(taus):
            out[i] = np.real(delay_phasor(float(tau), cfg) @ weights) / k
    return out


def estimate_toa(
    obs_spectrum: np.ndarray, probe_spectrum: np.ndarray, geom: ArrayGeometry, cfg: FreqDomainConfig
) -> ToaEstimate:
    """Grid-search delay estimate of the strongest probe reflection.

    Ties in the objective break toward the smaller delay (the physically
    nearest reflector).
    """
    taus = tau_grid(cfg, geom)
    scores = correlation_objective(obs_spectrum, probe_spectrum, taus, cfg)
    best = int(np.argmax(scores))
    gain = estimate_gain(obs_spectrum, float(taus[best]), probe_spectrum, cfg)
    return ToaEstimate(
        tau=float(taus[best]),
        gain=gain,
        score=float(scores[best]),
        at_boundary=best in (0, taus.shape[0] - 1),
    )


def sequential_relax(
    obs_spectrum: np.ndarray,
    probe_spectrum: np.ndarray,
    num_reflections: int,
    geom: ArrayGeometry,
    cfg: FreqDomainConfig,
) -> list[ToaEstimate]:
    """Cyclic multi-echo estimation: strongest-first subtraction followed by
    one refinement pass of each component against the others' residual.
    Estimates are returned sorted by ascending delay."""
    if num_reflections < 1:
        raise ValueError("num_reflections must be at least 1")
    taus = tau_grid(cfg, geom)
    if num_reflections > taus.shape[0]:
        raise ValueError("more reflections requested than grid points")

    def _component(est: ToaEstimate) -> np.ndarray:
        return est.gain * delay_phasor(est.tau, cfg) * probe_spectrum

    estimates: list[ToaEstimate] = []
    residual = np.asarray(obs_spectrum, dtype=complex).copy()
    for _ in range(num_reflections):
        est = estimate_toa(residual, probe_spectrum, geom, cfg)
        estimates.append(est)
        residual -= _component(est)

    if num_reflections > 1:
        components = [_component(e) for e in estimates]
        total = np.sum(components, axis=0)
        for i in range(num_reflections):
            partial = np.asarray(obs_spectrum, dtype=complex) - (total - components[i])
            estimates[i] = estimate_toa(partial, probe_spectrum, geom, cfg)
            components[i] = _component(estimates[i])
            total = np.sum(components, axis=0)
    return sorted(estimates, key=lambda e: e.tau)
