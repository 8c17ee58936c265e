"""Build hook for the optional compiled consensus kernel.

The extension is marked optional: when Cython or a C compiler is missing the
package still installs and falls back to the numpy implementation.
"""
from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build environment dependent
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "gcts._kernels",
                ["src/gcts/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
