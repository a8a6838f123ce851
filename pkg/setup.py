"""Optional compiled march core.  Falls back to the pure-Python loop when
Cython or a C compiler is unavailable."""
from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("wavesmith._march_core", ["src/wavesmith/_march_core.pyx"],
                   include_dirs=[numpy.get_include()], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"wavesmith: building without the compiled core ({exc})")

setup(ext_modules=ext_modules)
