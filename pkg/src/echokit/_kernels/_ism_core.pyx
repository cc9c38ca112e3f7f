# Compiled tap-accumulation kernel: the hot loop of image-source RIR
# synthesis.  Must stay semantically identical to ism_numpy.accumulate_taps.

from libc.math cimport cos, fabs, floor, llround, sin, M_PI

cdef double SINC_FLOOR = 1e-12


cdef inline double reduced_sinc(double t) nogil:
    # sin(pi t)/(pi t) on the argument reduced to the nearest integer, so
    # near-integer delays give exact zeros at the neighboring taps.
    cdef long long nearest
    cdef double s
    if t == 0.0:
        return 1.0
    nearest = llround(t)
    s = sin(M_PI * (t - nearest)) / (M_PI * t)
    if nearest & 1:
        s = -s
    return s


def accumulate_taps(double[::1] out, double[::1] delays, double[::1] amps, int half_width):
    """Add Hann-windowed sinc pulses at fractional sample positions into ``out``.

    See ``echokit._kernels.ism_numpy.accumulate_taps`` for the contract.
    """
    cdef Py_ssize_t n_img = delays.shape[0]
    cdef Py_ssize_t n_out = out.shape[0]
    cdef Py_ssize_t i, j, idx, base
    cdef double d, a, t, s
    if half_width < 1:
        raise ValueError("half_width must be at least 1")
    with nogil:
        for i in range(n_img):
            d = delays[i]
            a = amps[i]
            base = <Py_ssize_t>floor(d) - 1
            for j in range(half_width + 2):
                idx = base + j
                if idx < 0:
                    continue
                if idx >= n_out:
                    break
                t = idx - d
                if t <= -half_width or t >= half_width:
                    continue
                s = reduced_sinc(t)
                if fabs(s) < SINC_FLOOR:
                    continue
                out[idx] += a * s * (0.5 * (1.0 + cos(M_PI * t / half_width)))
