"""Build the optional Cython core.

The package works without it: ``knntest.qf`` falls back to the numpy
implementation when ``knntest._qfc`` cannot be imported. Set
``KNNTEST_NO_EXT=1`` to skip compilation entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("KNNTEST_NO_EXT"):
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
                    "knntest._qfc",
                    ["src/knntest/_qfc.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
