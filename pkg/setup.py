"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a NumPy/SciPy
fallback is selected at import time), so any failure to cythonize or
compile downgrades to a pure-Python install instead of aborting.
"""

import warnings

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "prandtl_lab._kernels",
                ["src/prandtl_lab/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - exercised only on broken toolchains
    warnings.warn(f"Cython kernel extension disabled ({exc}); using NumPy fallback")
    ext_modules = []

setup(ext_modules=ext_modules)
