"""Comparison method: dual-channel RIR estimation plus peak picking.

The transfer function from probe to microphone is estimated as the ratio of
Welch-averaged cross and auto spectra, inverse transformed to taps, and the
echo delay read off as the largest-magnitude tap inside the search interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from echokit.geometry import ArrayGeometry, ProbeSignal
from echokit.toa import FreqDomainConfig, ToaEstimate

WELCH_SEGMENT = 2048
DEFAULT_REG = 1e-3


@dataclass
class EstimatedRir:
    taps: np.ndarray
    sample_rate_hz: float


def estimate_rir_dual_channel(
    rec_channel: np.ndarray,
    probe: ProbeSignal,
    reg: float = DEFAULT_REG,
    seg_len: int = WELCH_SEGMENT,
) -> EstimatedRir:
    """Welch transfer-function estimate ``S_ys / (S_ss + reg * max S_ss)``.

    Hann segments with fifty percent overlap.  With ``reg=0`` any spectral
    null of the probe divides by (near) zero and blows up that band; the
    small relative regularization keeps the deconvolution bounded.
    """
    if reg < 0:
        raise ValueError("reg must be nonnegative")
    y = np.asarray(rec_channel, dtype=float)
    s = probe.samples
    n = max(y.shape[0], s.shape[0], seg_len)
    y = np.pad(y, (0, n - y.shape[0]))
    s = np.pad(s, (0, n - s.shape[0]))

    window = np.hanning(seg_len)
    hop = seg_len // 2
    n_seg = 1 + (n - seg_len) // hop
    s_ys = np.zeros(seg_len // 2 + 1, dtype=complex)
    s_ss = np.zeros(seg_len // 2 + 1)
    for t in range(n_seg):
        sl = slice(t * hop, t * hop + seg_len)
        sk = np.fft.rfft(window * s[sl])
        yk = np.fft.rfft(window * y[sl])
        s_ys += yk * np.conj(sk)
        s_ss += np.abs(sk) ** 2
    s_ys /= n_seg
    s_ss /= n_seg
    peak = float(s_ss.max())
    if peak <= 0.0:
        raise ValueError("zero-energy probe")
    h = s_ys / (s_ss + reg * peak)
    return EstimatedRir(taps=np.fft.irfft(h, seg_len), sample_rate_hz=probe.sample_rate_hz)


def peak_pick(rir: EstimatedRir, geom: ArrayGeometry, cfg: FreqDomainConfig) -> ToaEstimate:
    """Largest |tap| inside the search interval; ties toward the smaller delay."""
    lo = int(math.ceil(cfg.range_to_samples(cfg.search_min_m, geom)))
    hi = int(math.floor(cfg.range_to_samples(cfg.search_max_m, geom)))
    hi = min(hi, rir.taps.shape[0] - 1)
    if hi < lo:
        raise ValueError("search interval is empty within the tap range")
    segment = rir.taps[lo : hi + 1]
    best = int(np.argmax(np.abs(segment)))
    return ToaEstimate(tau=float(lo + best), gain=float(segment[best]), score=float(abs(segment[best])))
