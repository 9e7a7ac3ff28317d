"""Build the optional compiled kernels.

The package works without them; ``mvnav._backend`` falls back to numpy.
"""
import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("MVNAV_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "mvnav._kernels",
        ["src/mvnav/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions())
