"""Build script: compiles the optional Cython ranking kernel.

The package works without the extension (a pure numpy implementation is
selected at import time); building it just makes CMC/mAP evaluation faster
on large query/gallery sets.
"""
from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "posedistill.evaluation._rank_cy",
                ["src/posedistill/evaluation/rank_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
