"""Build the optional compiled subsolver kernel.

The package works without it: ``dnoport.subsolver`` falls back to the
pure-numpy kernel when the extension cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("DNOPORT_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "dnoport.subsolver._ckernel",
                    ["src/dnoport/subsolver/_ckernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
