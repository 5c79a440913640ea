"""Build the optional Cython kernels; the package still imports without them."""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("MOTIONPI_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - cython is in build requires
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "motionpi.signal._kernels",
                    ["src/motionpi/signal/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # keep float evaluation order identical to the Python fallback
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
