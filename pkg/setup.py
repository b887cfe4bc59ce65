"""Build script: compiles the hot simulation kernel as a C extension.

The extension is optional. If Cython or a C compiler is unavailable the
package installs without it and `hybridid._core` falls back to the pure
NumPy implementation at import time.
"""

import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/hybridid/_core/_step.pyx"],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )
except ImportError:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[numpy.get_include()],
)
