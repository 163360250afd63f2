"""Builds the optional compiled community-detection kernels.

The package works without the extension: graphdex.community falls back to
the pure-Python kernels when the compiled module is missing. The compiled
kernels must stay bit-identical to the Python ones, which is why FP
contraction is disabled below; do not add -ffast-math or similar.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "graphdex.community._kernels",
        ["src/graphdex/community/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions, compiler_directives={"language_level": "3"}
    )
    if cythonize is not None
    else [],
)
