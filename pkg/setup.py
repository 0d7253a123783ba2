import os
import warnings

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None


class OptionalBuildExt(build_ext):
    """Leave the pure-Python kernels in charge if the compiler is unavailable."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover
            warnings.warn(f"quatkg: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            warnings.warn(f"quatkg: failed to build {ext.name} ({exc}); using numpy fallback")


ext_modules = []
if cythonize is not None and not os.environ.get("QUATKG_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "quatkg._ckernels",
                ["src/quatkg/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # keep per-element arithmetic identical to the numpy path: no FMA, no reassociation
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
