"""Builds the optional compiled kernels.

When Cython or a C++ compiler is unavailable the package installs without
them and the numpy fallback is used at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PERFCAST_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "perfcast.classifiers._kernels",
                    ["src/perfcast/classifiers/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    language="c++",
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
