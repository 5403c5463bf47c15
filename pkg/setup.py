from setuptools import setup
from setuptools.extension import Extension

import numpy as np
from Cython.Build import cythonize

ext_modules = cythonize(
    [
        Extension(
            "roadsim.kernels._speedups",
            ["src/roadsim/kernels/_speedups.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            # Bit-identity with the pure-Python kernels forbids value-changing
            # transforms: FMA contraction and the sin/cos -> sincos fusion
            # (glibc sincos is 1 ulp off separate sin/cos for some inputs).
            extra_compile_args=[
                "-O3", "-ffp-contract=off",
                "-fno-builtin-sin", "-fno-builtin-cos",
                "-fno-builtin-sincos",
            ],
        )
    ],
    language_level=3,
)

setup(ext_modules=ext_modules)
