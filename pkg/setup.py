"""Build script: compiles the optional exchange-graph kernel extension.

Set HIERFAIR_PURE=1 to skip the extension entirely; the package then runs on
the pure-Python kernel selected automatically at import time.
"""

import os

from setuptools import Extension, setup

extensions = []
if not os.environ.get("HIERFAIR_PURE"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = cythonize(
            [
                Extension(
                    "hierfair._kernel._speedups",
                    ["src/hierfair/_kernel/_speedups.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )

setup(ext_modules=extensions)
