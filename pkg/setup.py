"""Build script.

The compiled extension is optional: if Cython or a C compiler is missing the
package installs anyway and falls back to the NumPy backend at import time.
"""

import os
import sys

from setuptools import Extension, setup


def _extensions():
    if not os.path.exists("src/qdip/_kernels/_core.pyx"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "qdip._kernels._core",
        sources=["src/qdip/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


try:
    setup(ext_modules=_extensions())
except SystemExit:
    # A broken toolchain should not block a pure-Python install.
    print("warning: compiled kernels unavailable, installing pure-Python build",
          file=sys.stderr)
    setup(ext_modules=[])
