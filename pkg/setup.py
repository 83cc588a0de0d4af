"""Build the optional compiled kernels; the package falls back to Python if this fails."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PAPERECG_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "paperecg._kernels",
                    ["src/paperecg/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no -ffast-math: both backends must agree bit-for-bit on the integer kernels
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
