import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

compile_args = ["-O3"]
if os.environ.get("SSRECON_NATIVE", "1") != "0":
    compile_args.append("-march=native")

extensions = [
    Extension(
        "ssrecon.kernels._conv",
        ["src/ssrecon/kernels/_conv.pyx"],
        include_dirs=[np.get_include(), "src/ssrecon/kernels"],
        extra_compile_args=compile_args,
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
