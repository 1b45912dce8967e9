from spack_repo.builtin.build_systems.cmake import CMakePackage

from spack.package import *


class Googletest(CMakePackage):
    """Google test framework for C++.  Also called gtest."""

    homepage = "https://github.com/google/googletest"
    url = "https://github.com/google/googletest/archive/release-1.10.0.tar.gz"
    git = "https://github.com/google/googletest"
    maintainers("sethrj")

    license("BSD-3-Clause")

    version("main", branch="main")
    version("1.15.2", sha256="75ab137178471dd67ddfe612af66f29b58cddc64fdfa825246bc1425e6d8ba89")
    version("1.14.0", sha256="10e7a82891bd1cfe4ca9a655ce1777b15cf8387e64af70e72de25e24f0ff6a81")
    version("1.12.1", sha256="6db785741ff250412a5f624d1b2cc20f2a5d84ac1a8a303dfa1b06cae190b224")
    version("1.10.0", sha256="09c75433da55ccd499478926bf0494ad3378706f0ce6d87cce8eb607d478782a")

    variant("gmock", default=True, when="@1.8:", description="Build with gmock")
    variant("pthreads", default=True, description="Build multithreaded version with pthreads")
    variant("shared", default=True, description="Build shared libraries (DLLs)")
    variant(
        "cxxstd",
        default="11",
        values=("98", "11", "14", "17", "20"),
        multi=False,
        description="Use the specified C++ standard when building",
    )
    variant("absl", default=False, when="@1.12.1:", description="Build with abseil and RE2")

    depends_on("c", type="build")
    depends_on("cxx", type="build")
    depends_on("cmake@3.5:", type="build")
    depends_on("abseil-cpp", when="+absl")
    depends_on("re2", when="+absl")

    def cmake_args(self):
        spec = self.spec
        args = [
            self.define_from_variant("gtest_disable_pthreads", "pthreads"),
            self.define_from_variant("BUILD_SHARED_LIBS", "shared"),
            self.define_from_variant("CMAKE_CXX_STANDARD", "cxxstd"),
            self.define_from_variant("BUILD_GMOCK", "gmock"),
            self.define_from_variant("GTEST_HAS_ABSL", "absl"),
        ]
        if spec.satisfies("@:1.8.0"):
            args.append(self.define("gtest_disable_pthreads", not spec.satisfies("+pthreads")))
        return args

    @when("@:1.7.0")
    def install(self, spec, prefix):
        with working_dir(self.build_directory):
            install_tree(join_path(self.stage.source_path, "include"), prefix.include)
            mkdirp(prefix.lib)
