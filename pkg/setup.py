"""Build the optional compiled kernel.

Set ``POVMTOMO_NO_EXT=1`` to skip it; the package then runs on the numpy
fallback in ``povmtomo._kernels_py``.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("POVMTOMO_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "povmtomo._ckernels",
                    ["src/povmtomo/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
