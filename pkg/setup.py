"""Optional compiled kernels; the package falls back to NumPy when they are absent."""
from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("gfspec._core", ["src/gfspec/_core.pyx"],
                   include_dirs=[np.get_include()], optional=True,
                   define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
        language_level="3",
    )

setup(ext_modules=ext_modules)
