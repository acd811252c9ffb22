from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension("mlda._lv_kernel", ["src/mlda/_lv_kernel.pyx"]),
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": 3}),
)
