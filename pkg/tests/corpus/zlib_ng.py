from spack_repo.builtin.build_systems import autotools, cmake
from spack_repo.builtin.build_systems.autotools import AutotoolsPackage
from spack_repo.builtin.build_systems.cmake import CMakePackage

from spack.package import *


class ZlibNg(AutotoolsPackage, CMakePackage):
    """zlib replacement with optimizations for next generation systems."""

    homepage = "https://github.com/zlib-ng/zlib-ng"
    url = "https://github.com/zlib-ng/zlib-ng/archive/2.0.0.tar.gz"
    git = "https://github.com/zlib-ng/zlib-ng.git"

    maintainers("haampie")

    license("Zlib")

    version("2.2.1", sha256="83fa7491ae365a2fa92b4dfd77c88e6024c9c6a0bf0a4d2ead31d0991e24c7f4")
    version("2.1.6", sha256="11412085924aa788c2f0241bd04af81bdf56bcea42a143df8dd6760c64feb188")
    version("2.0.7", sha256="fa0ca903a12bb582920d7e92773275e333a9b274cf51a665cb36c55a9337c8a3")

    variant("compat", default=True, description="Enable compatibility API")
    variant("opt", default=True, description="Enable optimizations")
    variant("shared", default=True, description="Build shared library")
    variant("pic", default=True, description="Enable position-independent code (PIC)")

    provides("zlib-api", when="+compat")

    build_system("autotools", conditional("cmake", when="@2.0.7:"), default="autotools")

    depends_on("c", type="build")

    with when("build_system=cmake"):
        depends_on("cmake@3.5.1:", type="build")
        depends_on("cmake@3.14.0:", type="build", when="@2.1.0:")

    conflicts("+shared~pic")

    @property
    def libs(self):
        name = "libz" if self.spec.satisfies("+compat") else "libz-ng"
        return find_libraries(name, root=self.prefix, recursive=True, shared=self.spec.satisfies("+shared"))


class AutotoolsBuilder(autotools.AutotoolsBuilder):
    def configure_args(self):
        args = []
        if self.spec.satisfies("+compat"):
            args.append("--zlib-compat")
        if self.spec.satisfies("~opt"):
            args.append("--without-optimizations")
        if self.spec.satisfies("~shared"):
            args.append("--static")
        return args


class CMakeBuilder(cmake.CMakeBuilder):
    def cmake_args(self):
        return [
            self.define_from_variant("ZLIB_COMPAT", "compat"),
            self.define_from_variant("WITH_OPTIM", "opt"),
            self.define("BUILD_SHARED_LIBS", self.spec.satisfies("+shared")),
            self.define_from_variant("CMAKE_POSITION_INDEPENDENT_CODE", "pic"),
            self.define("ZLIB_ENABLE_TESTS", self.pkg.run_tests),
        ]
