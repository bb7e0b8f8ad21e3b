"""Build hook for the optional compiled gate kernel.

The package is fully functional without the extension; the pure-numpy
twin in ``phi4kz.kernels.pure`` is selected at import time when the
compiled module is unavailable.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "phi4kz.kernels._gatecore",
                ["src/phi4kz/kernels/_gatecore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
