import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "lumamba.bimamba._scan_ext",
    ["src/lumamba/bimamba/_scan_ext.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
    optional=True,  # the pure-numpy kernel takes over if this fails to build
)

setup(ext_modules=cythonize([ext], language_level=3))
