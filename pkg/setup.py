from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled kernels are an optional speedup; the package falls back to the
# pure NumPy implementations in setrank._kernels_py when the build is skipped.
extensions = [
    Extension(
        "setrank._native",
        ["src/setrank/_native.pyx"],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions) if cythonize is not None else [])
