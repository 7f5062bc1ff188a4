from setuptools import Extension, setup
from Cython.Build import cythonize
import numpy as np


ext_module = Extension(
    "abc_localize.kernels._speedups",
    ["src/abc_localize/kernels/_speedups.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(
    ext_modules=cythonize(ext_module, language_level=3),
)
