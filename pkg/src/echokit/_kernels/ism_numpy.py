"""Pure-numpy fallback for the tap-accumulation kernel.

Semantics must match ``_ism_core.accumulate_taps`` exactly up to float
summation order; ``tests/test_kernels.py`` holds the two implementations
together.
"""

import numpy as np

_CHUNK = 1 << 16


def accumulate_taps(out: np.ndarray, delays: np.ndarray, amps: np.ndarray, half_width: int) -> None:
    """Add Hann-windowed sinc pulses at fractional sample positions into ``out``.

    Each pulse is centered at ``delays[i]`` (samples), scaled by ``amps[i]``,
    and truncated on the left so no tap lands before ``floor(delay) - 1``:
    the response stays causal relative to the geometric arrival, at the cost
    of a few percent of pulse energy.  Integer delays collapse to a single
    nonzero tap because the sinc is full band.
    """
    if half_width < 1:
        raise ValueError("half_width must be at least 1")
    n_out = out.shape[0]
    delays = np.asarray(delays, dtype=float)
    amps = np.asarray(amps, dtype=float)
    offsets = np.arange(-1, half_width + 1)
    for start in range(0, delays.shape[0], _CHUNK):
        d = delays[start : start + _CHUNK]
        a = amps[start : start + _CHUNK]
        idx = np.floor(d).astype(np.int64)[:, None] + offsets[None, :]
        t = idx - d[:, None]
        sinc = _reduced_sinc(t)
        vals = a[:, None] * sinc * (0.5 * (1.0 + np.cos(np.pi * t / half_width)))
        keep = (idx >= 0) & (idx < n_out) & (np.abs(t) < half_width) & (np.abs(sinc) >= _SINC_FLOOR)
        out += np.bincount(idx[keep], weights=vals[keep], minlength=n_out)[:n_out]


_SINC_FLOOR = 1e-12


def _reduced_sinc(t: np.ndarray) -> np.ndarray:
    """sin(pi t) / (pi t) computed on the argument reduced to the nearest
    integer, so near-integer delays produce exact zeros instead of float
    residue at the neighboring taps."""
    nearest = np.round(t)
    rest = t - nearest
    sign = np.where(nearest.astype(np.int64) & 1, -1.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = sign * np.sin(np.pi * rest) / (np.pi * t)
    return np.where(t == 0.0, 1.0, values)
