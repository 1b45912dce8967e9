from spack_repo.builtin.build_systems.cmake import CMakePackage

from spack.package import *


class Cpuinfo(CMakePackage):
    """cpuinfo is a library to detect essential
    for performance optimization information about host CPU."""

    homepage = "https://github.com/pytorch/cpuinfo/"
    git = "https://github.com/pytorch/cpuinfo.git"

    license("BSD-2-Clause")

    version("main", branch="main")
    version("2024-09-06", commit="094fc30b9256f54dad5ad23bcbfb5de74781422f")
    version("2023-11-04", commit="d6860c477c99f1fce9e28eb206891af3c0e1a1d7")

    variant("shared", default=False, description="Build shared libs")

    depends_on("c", type="build")
    depends_on("cxx", type="build")
    depends_on("cmake@3.5:", type="build")
    depends_on("ninja", type="build")

    generator("ninja")

    def cmake_args(self):
        return [
            self.define_from_variant("BUILD_SHARED_LIBS", "shared"),
            self.define("CPUINFO_BUILD_UNIT_TESTS", False),
            self.define("CPUINFO_BUILD_MOCK_TESTS", False),
            self.define("CPUINFO_BUILD_BENCHMARKS", False),
            self.define("CPUINFO_LIBRARY_TYPE", "shared" if "+shared" in self.spec else "static"),
        ]
