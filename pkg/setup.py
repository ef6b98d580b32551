import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-Python install still works: the package falls back to the
    # numpy kernels when the extension is missing.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "nndecomp._kernels._speedups",
                ["src/nndecomp/_kernels/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
