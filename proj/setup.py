"""CMake bridge: builds the _core extension through the project's CMakeLists."""

import subprocess
import sys
from pathlib import Path

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        root = Path(__file__).resolve().parent
        build = Path(self.build_temp).resolve() / "cmake"
        build.mkdir(parents=True, exist_ok=True)
        subprocess.run(
            [
                "cmake",
                str(root),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DRIM_BUILD_TESTS=OFF",
                f"-DPython3_EXECUTABLE={sys.executable}",
            ],
            cwd=build,
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", ".", "--target", "_core", "--parallel"],
            cwd=build,
            check=True,
        )
        built = next(build.glob("python/rim/_core*.so"))
        dest = Path(self.get_ext_fullpath(ext.name)).resolve()
        dest.parent.mkdir(parents=True, exist_ok=True)
        self.copy_file(str(built), str(dest))


setup(ext_modules=[CMakeExtension("rim._core")], cmdclass={"build_ext": CMakeBuild})
