from spack_repo.builtin.build_systems.cmake import CMakePackage

from spack.package import *


class YamlCpp(CMakePackage):
    """A YAML parser and emitter in C++"""

    homepage = "https://github.com/jbeder/yaml-cpp"
    url = "https://github.com/jbeder/yaml-cpp/archive/yaml-cpp-0.5.3.tar.gz"
    git = "https://github.com/jbeder/yaml-cpp.git"

    license("MIT")

    version("develop", branch="master")
    version("0.8.0", sha256="a26efba42db3358aa456f53f8e4efc6202a6e2a2a5d38445d16e8adf9962cee4")
    version("0.7.0", sha256="9d7ce7caeea616e60b495974be83e45203fe6b6e5259ee8fcb6dd8d98a6d89e4")
    version("0.6.3", sha256="8787f7b15eaeb3027ba87660767eac08a95f892a1f21dca2cbf159bbd52a4c7b")

    variant("shared", default=True, description="Build shared instead of static libraries")
    variant("pic", default=True, description="Build with position independent code")
    variant("tests", default=False, description="Build yaml-cpp tests using internal gtest")

    depends_on("c", type="build")
    depends_on("cxx", type="build")
    depends_on("boost@:1.66", when="@0.5.0:0.5.3")

    conflicts("%gcc@:4.7", when="@0.6.0:", msg="versions 0.6.0: require c++11 support")
    conflicts("%clang@:3.3.0", when="@0.6.0:", msg="versions 0.6.0: require c++11 support")

    def cmake_args(self):
        options = []
        options.extend([
            self.define_from_variant("BUILD_SHARED_LIBS", "shared"),
            self.define_from_variant("YAML_BUILD_SHARED_LIBS", "shared"),
            self.define_from_variant("CMAKE_POSITION_INDEPENDENT_CODE", "pic"),
            self.define_from_variant("YAML_CPP_BUILD_TESTS", "tests"),
        ])
        return options
