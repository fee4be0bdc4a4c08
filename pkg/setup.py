from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "stmlforge.interp._vmcore",
                ["src/stmlforge/interp/_vmcore.pyx"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # Pure-Python fallback is selected at import time; the extension is a
    # performance core, not a requirement.
    extensions = []

setup(ext_modules=extensions)
