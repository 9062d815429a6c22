"""Build the optional compiled kernels.

If Cython or a C compiler is unavailable the package still installs and
falls back to the numpy implementation at import time.
"""

import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("ANNUITIZE_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "annuitize._ckernels",
        ["src/annuitize/_ckernels.pyx"],
        extra_compile_args=["-O3"],
        libraries=["m"] if os.name == "posix" else [],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
