"""Build script: compiles the optional evaluation kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so a failed compile only costs speed. The build
is therefore tolerant: any Cython/compiler problem falls back to a pure
Python install.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/quadralg/_evalcore.pyx"],
        compiler_directives={"language_level": "3"},
    )
except Exception as err:  # noqa: BLE001 - intentional tolerant build
    print(f"quadralg: building without the compiled kernel ({err})")

setup(ext_modules=ext_modules)
