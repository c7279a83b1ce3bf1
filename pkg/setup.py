import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "replaymark.simkit._loop_c",
                ["src/replaymark/simkit/_loop_c.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps results bit-comparable with the
                # pure-Python backend (no fused multiply-adds).
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
