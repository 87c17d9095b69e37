from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Without Cython the package still installs; qiplab.kernels falls back
    # to the pure numpy implementation at import time.
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("qiplab._quadform", ["src/qiplab/_quadform.pyx"])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
