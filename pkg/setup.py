"""Build script for the optional compiled kernels.

The package is fully functional without the extension: wrcast._backend
falls back to the numpy implementations when the compiled module is
missing. Set WRCAST_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import setup


def _extensions():
    if os.environ.get("WRCAST_NO_EXT") == "1":
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "wrcast._kernels",
        sources=["src/wrcast/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off keeps the split-scan arithmetic identical to the
        # numpy fallback (no FMA contraction), so both backends grow the
        # same trees.
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
