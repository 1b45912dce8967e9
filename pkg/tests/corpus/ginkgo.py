from spack_repo.builtin.build_systems.cmake import CMakePackage
from spack_repo.builtin.build_systems.cuda import CudaPackage
from spack_repo.builtin.build_systems.rocm import ROCmPackage

from spack.package import *


class Ginkgo(CMakePackage, CudaPackage, ROCmPackage):
    """High-performance linear algebra library for manycore systems,
    with a focus on sparse solution of linear systems."""

    homepage = "https://ginkgo-project.github.io/"
    git = "https://github.com/ginkgo-project/ginkgo.git"

    tags = ["e4s"]

    maintainers("tcojean", "hartwiganzt")

    license("MIT")

    version("develop", branch="develop")
    version("master", branch="master")
    version("1.8.0", commit="586b1754058d7a32d4bd1b650f9603484c2a8927")
    version("1.7.0", commit="49242ff89af1e695d7794f6d50ed9933024b66fe")

    variant("shared", default=True, description="Build shared libraries")
    variant("full_optimizations", default=False, description="Compile with all optimizations")
    variant("openmp", default=True, description="Build with OpenMP")
    variant("sycl", default=False, description="Enable SYCL backend")
    variant("develtools", default=False, description="Compile with develtools enabled")
    variant("hwloc", default=False, description="Enable HWLOC support")
    variant("sde", default=False, description="Enable PAPI SDE support", when="@1.7.0:")
    variant("mpi", default=False, description="Enable MPI support")

    depends_on("cmake@3.9:", type="build", when="@:1.3.0")
    depends_on("cmake@3.13:", type="build", when="@1.4.0:1.6.0")
    depends_on("cmake@3.16:", type="build", when="@1.7.0:")
    depends_on("c", type="build")
    depends_on("cxx", type="build")
    depends_on("cuda@9:", when="+cuda @:1.4.0")
    depends_on("cuda@9.2:", when="+cuda @1.5.0:")
    depends_on("mpi@3.1:", when="+mpi")

    depends_on("rocthrust", when="+rocm")
    depends_on("hipsparse", when="+rocm")
    depends_on("hipblas", when="+rocm")
    depends_on("hiprand", when="+rocm")
    depends_on("hwloc@2.1:", when="+hwloc")
    depends_on("papi@7.1.0:+sde", when="+sde")

    depends_on("googletest", type="test")
    depends_on("numactl", type="test", when="+hwloc")

    conflicts("%gcc@:5.2.9")
    conflicts("+rocm", when="@:1.1.1")
    conflicts("+mpi", when="@:1.4.0")
    conflicts("+sycl", when="@:1.4.0")
    conflicts("+sycl", when="+cuda", msg="For SYCL builds, CUDA must be disabled")

    def cmake_args(self):
        spec = self.spec
        from_variant = self.define_from_variant
        args = [
            from_variant("GINKGO_BUILD_CUDA", "cuda"),
            from_variant("GINKGO_BUILD_HIP", "rocm"),
            from_variant("GINKGO_BUILD_SYCL", "sycl"),
            from_variant("GINKGO_BUILD_OMP", "openmp"),
            from_variant("GINKGO_BUILD_MPI", "mpi"),
            from_variant("BUILD_SHARED_LIBS", "shared"),
            from_variant("GINKGO_JACOBI_FULL_OPTIMIZATIONS", "full_optimizations"),
            from_variant("GINKGO_BUILD_HWLOC", "hwloc"),
            from_variant("GINKGO_WITH_CCACHE", "ccache"),
            from_variant("GINKGO_DEVEL_TOOLS", "develtools"),
            self.define("GINKGO_BUILD_TESTS", self.run_tests),
            self.define("GINKGO_BUILD_BENCHMARKS", False),
            self.define("GINKGO_BUILD_EXAMPLES", False),
        ]
        return args
