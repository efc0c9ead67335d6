"""Build script for the optional compiled kernels.

The package works without the extension: ``latentcox._backend`` falls back to
the numpy implementations in ``latentcox._kernels_py`` when the compiled
module is missing, so the extension build is marked optional.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    np = None
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "latentcox._kernels",
                ["src/latentcox/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
