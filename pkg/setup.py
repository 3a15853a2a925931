import os

from setuptools import setup

ext_modules = []
if not os.environ.get("GEOLEAK_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        print("Cython/numpy unavailable; installing the pure-Python kernels only")
    else:
        ext_modules = cythonize(
            [Extension(
                "geoleak.kernels._core",
                ["src/geoleak/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                language="c++",
            )],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
