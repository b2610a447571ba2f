"""Builds the Rust extension module with cargo and places the resulting
cdylib where the interpreter expects seqauct._seqauct."""

import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

ROOT = Path(__file__).parent.resolve()


class CargoExtension(Extension):
    def __init__(self, name, crate):
        super().__init__(name, sources=[])
        self.crate = crate


class CargoBuild(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            ["cargo", "build", "--release", "-p", ext.crate],
            cwd=ROOT,
            check=True,
        )
        lib_name = ext.name.rsplit(".", 1)[-1]
        if sys.platform == "darwin":
            built = ROOT / "target" / "release" / f"lib{lib_name}.dylib"
        elif sys.platform == "win32":
            built = ROOT / "target" / "release" / f"{lib_name}.dll"
        else:
            built = ROOT / "target" / "release" / f"lib{lib_name}.so"
        suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
        dest = Path(self.get_ext_fullpath(ext.name)).with_name(lib_name + suffix)
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built, dest)


setup(
    ext_modules=[CargoExtension("seqauct._seqauct", crate="seqauct-py")],
    cmdclass={"build_ext": CargoBuild},
)
