"""Backend selection for the hot tap-accumulation kernel.

The compiled extension is used when present; otherwise the numpy fallback
takes over transparently.  ``ECHOKIT_KERNEL=numpy`` in the environment forces
the fallback, which the benchmark and the equivalence tests rely on.
"""

import os

from echokit._kernels.ism_numpy import accumulate_taps as accumulate_taps_numpy

try:
    from echokit._kernels._ism_core import accumulate_taps as accumulate_taps_cython
except ImportError:
    accumulate_taps_cython = None

if accumulate_taps_cython is not None and os.environ.get("ECHOKIT_KERNEL", "") != "numpy":
    accumulate_taps = accumulate_taps_cython
    BACKEND = "cython"
else:
    accumulate_taps = accumulate_taps_numpy
    BACKEND = "numpy"

__all__ = ["accumulate_taps", "accumulate_taps_numpy", "accumulate_taps_cython", "BACKEND"]
