"""Build the optional compiled kernels; the package works without them."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SPCRELAY_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        # no -ffast-math: the compiled oracle must agree bitwise with the numpy fallback
        ext_modules = cythonize(
            [Extension("spcrelay._ckernels", ["src/spcrelay/_ckernels.pyx"],
                       include_dirs=[np.get_include()], extra_compile_args=["-O2"],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
