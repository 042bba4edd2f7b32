"""Build script for the optional compiled kernel extension.

The package works without the extension (the numpy kernel backend is
selected at import time); building it just makes the fused inner-loop
kernels available.  Run ``python setup.py build_ext --inplace`` for a
source checkout, or let ``pip install`` drive it.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "trifuse._ckernels",
    ["src/trifuse/_ckernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    ext_modules=cythonize(
        [ext],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": "3",
        },
    ),
)
