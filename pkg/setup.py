import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install, kernel fallback is used
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("ATC_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "atc._kernel",
                ["src/atc/_kernel.pyx"],
                libraries=["mpfr", "gmp"],
                include_dirs=["/usr/include/x86_64-linux-gnu"],
                extra_compile_args=["-O2"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
