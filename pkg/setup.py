"""Build script for the optional compiled tap-accumulation kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes room-impulse-response
synthesis considerably faster.  Build in place with:

    python setup.py build_ext --inplace
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


def _extensions():
    if cythonize is None:
        return []
    ext = Extension(
        "echokit._kernels._ism_core",
        ["src/echokit/_kernels/_ism_core.pyx"],
        include_dirs=[np.get_include()],
    )
    directives = {
        "language_level": 3,
        "boundscheck": False,
        "wraparound": False,
        "cdivision": True,
        "initializedcheck": False,
    }
    return cythonize([ext], compiler_directives=directives)


setup(ext_modules=_extensions())
