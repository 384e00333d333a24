from setuptools import Extension, setup
from Cython.Build import cythonize

setup(
    ext_modules=cythonize(
        [Extension("rwre._stepper", ["src/rwre/_stepper.pyx"])],
        language_level=3,
    )
)
