import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "nonloc._kernels._stencil_cy",
                ["src/nonloc/_kernels/_stencil_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
else:
    # Pure-Python install: nonloc._kernels falls back to the NumPy backend.
    ext_modules = []

setup(ext_modules=ext_modules)
