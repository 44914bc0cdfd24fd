import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dotkit._kernels._core",
                ["src/dotkit/_kernels/_core.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython available: install without the compiled backend, the
    # pure-NumPy kernels are selected at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
