import os

from setuptools import Extension, setup

# SLPNET_NO_EXT=1 skips the compiled kernels; the package then runs on the
# pure-numpy fallback selected at import time.
if os.environ.get("SLPNET_NO_EXT") == "1":
    ext_modules = []
else:
    import numpy
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "slpnet._kernels",
            ["src/slpnet/_kernels.pyx"],
            include_dirs=[numpy.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
