"""Builds the optional compiled GRU kernel.

The package works without it (mmkp.kernels falls back to the numpy
implementation); any compilation failure is therefore non-fatal.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/mmkp/kernels/_gru_cy.pyx"],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover
    print(f"warning: skipping compiled kernel ({exc}); using pure-Python fallback")

setup(ext_modules=ext_modules)
