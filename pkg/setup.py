"""Build script for the compiled spectral kernel.

The package works without the extension (a pure numpy fallback is selected
at import time); building it just makes the per-window FFT hot path faster.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "tfmeta._fftkernel",
        ["src/tfmeta/_fftkernel.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
