"""Build script for the optional compiled scoring kernel.

The package is fully functional without the extension; scoring falls back
to a vectorized numpy implementation selected at import time.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fsmrag._scorekernel_c",
                ["src/fsmrag/_scorekernel_c.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )
except Exception:
    ext_modules = []

setup(ext_modules=ext_modules)
