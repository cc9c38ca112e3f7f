#!/usr/bin/env python3
"""Benchmark the compiled tap-accumulation kernel against the numpy fallback.

The workload is the hot loop of image-source RIR synthesis: a realistic
image cloud for the 10 x 8 x 5 m evaluation room at several reverberation
times, plus the end-to-end six-microphone simulation that sits on top.

Example:
    python benchmarks/bench_kernels.py --repeats 3
"""

import argparse
import math
import time

import numpy as np

from echokit import room
from echokit._kernels import accumulate_taps_cython, accumulate_taps_numpy
from echokit.geometry import ArrayGeometry, mic_positions


def _image_workload(t60: float, fs: float = 22050.0, c: float = 343.0):
    """Image delays/amplitudes as simulate_rir would enumerate them."""
    spec = room.RoomSpec(dims_m=(10, 8, 5), t60_s=t60)
    length = int(1.1 * t60 * fs)
    beta = room.t60_to_reflection_coeff(spec, "eyring").coefficient
    dims = np.array(spec.dims_m)
    src = np.array([4.0, 3.0, 2.5])
    mic = np.array([6.0, 5.0, 2.0])
    d_max = (length + 32) * c / fs
    reps = np.ceil(d_max / (2 * dims)).astype(int) + 1
    grids = np.meshgrid(*(np.arange(-n, n + 1) for n in reps), indexing="ij")
    r = np.stack([g.ravel() for g in grids], axis=1).astype(float)
    delays, amps = [], []
    for px in (0, 1):
        for py in (0, 1):
            for pz in (0, 1):
                p = np.array([px, py, pz], dtype=float)
                images = (1 - 2 * p) * (src[None, :] + 2 * r * dims[None, :])
                bounces = (np.abs(r + p) + np.abs(r)).sum(axis=1)
                dists = np.linalg.norm(images - mic[None, :], axis=1)
                keep = dists <= d_max
                delays.append(dists[keep] * fs / c)
                amps.append(beta ** bounces[keep] / (4 * math.pi * dists[keep]))
    return np.concatenate(delays), np.concatenate(amps), length


def _time(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if accumulate_taps_cython is None:
        print("compiled kernel not built (python setup.py build_ext --inplace); benchmarking numpy only")

    print(f"{'workload':<28}{'images':>10}{'numpy':>12}{'cython':>12}{'speedup':>10}")
    for t60 in (0.2, 0.6, 1.0):
        delays, amps, length = _image_workload(t60)

        def run(kernel):
            out = np.zeros(length)
            kernel(out, delays, amps, 32)

        t_np = _time(lambda: run(accumulate_taps_numpy), args.repeats)
        row = f"{'tap accumulation T60=' + format(t60, '.1f'):<28}{delays.size:>10}{t_np * 1e3:>10.1f}ms"
        if accumulate_taps_cython is not None:
            t_cy = _time(lambda: run(accumulate_taps_cython), args.repeats)
            row += f"{t_cy * 1e3:>10.1f}ms{t_np / t_cy:>9.1f}x"
        print(row)

    # end-to-end six-microphone simulation through the selected backend
    from echokit._kernels import BACKEND

    spec = room.RoomSpec(dims_m=(10, 8, 5), t60_s=0.6)
    geom = ArrayGeometry(mic_count=6, radius_m=0.2)
    center = np.array([1.35, 1.4, 2.5])
    mics = mic_positions(geom, center)
    room.t60_to_reflection_coeff(spec, "calibrated")  # warm the calibration cache

    def simulate():
        room.simulate_rir(spec, center, mics, int(0.35 * 22050.0))

    t_active = _time(simulate, args.repeats)
    print(f"\nsimulate_rir (6 mics, 0.35 s, backend={BACKEND}): {t_active * 1e3:.1f} ms")
    if BACKEND == "cython":
        print("set ECHOKIT_KERNEL=numpy to benchmark the fallback end to end")


if __name__ == "__main__":
    main()
