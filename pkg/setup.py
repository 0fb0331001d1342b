"""Build script for the optional compiled precoder core.

The package is pure Python except for one Cython extension holding the
WMMSE/SWMMSE inner loops.  The extension is marked optional: if no C
toolchain (or Cython) is available the install still succeeds and the
package falls back to the numpy implementation at import time.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("FDDLAB_PURE") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext = Extension(
            "fddlab._precoder_core",
            sources=["src/fddlab/_precoder_core.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level="3")
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
