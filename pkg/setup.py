"""Build script for the optional compiled kernel extension.

The package works without the extension; if Cython or a C compiler is
missing the build falls back to the pure Python kernels at import time.
Floating point contraction is disabled so the compiled loops round
exactly like the interpreter and the two backends stay bit-identical.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "mfccsynth.kernels._core",
                ["src/mfccsynth/kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build environment
    print(f"skipping compiled kernels ({exc}); pure Python fallback will be used")
    ext_modules = []

setup(ext_modules=ext_modules)
