"""Build script: compiles the PWM sampling kernel when a toolchain is present.

The extension is optional; vmcsim.kernels falls back to the numpy
implementation if the compiled module is missing.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "vmcsim._pwm_cy",
                ["src/vmcsim/_pwm_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
