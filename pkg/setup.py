"""Builds the optional compiled kernel backend.

The package works without the extension (a numpy fallback is selected at
import); building it just makes training and decoding faster:

    pip install -e . --no-build-isolation
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "causeway.neural._corekern",
        ["src/causeway/neural/_corekern.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
