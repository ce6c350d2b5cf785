"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (NumPy fallback is selected at
import time), so any build failure here is non-fatal for users who set
STVTR_NO_EXT=1 or lack a C toolchain.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("STVTR_NO_EXT", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "stvtr.numerics._kernels",
                    ["src/stvtr/numerics/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
