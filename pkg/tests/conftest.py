from __future__ import annotations

from pathlib import Path

import pytest

from recipeforge import gateway
from recipeforge.evaluation import SandboxConfig
from recipeforge.repair import SessionConfig

TESTS = Path(__file__).parent
CORPUS = TESTS / "corpus"
FIXTURES = TESTS / "fixtures"
LOGS = TESTS / "logs"
GOLDEN = TESTS / "golden"

FXDIV_OK = '''from spack.package import *


class Fxdiv(CMakePackage):
    """Header-only library for division via fixed-point multiplication."""

    homepage = "https://github.com/Maratyszcza/FXdiv"
    git = "https://github.com/Maratyszcza/FXdiv.git"

    version("master", branch="master")

    depends_on("c", type="build")
    depends_on("cxx", type="build")
    depends_on("cmake@3.5:", type="build")

    def cmake_args(self):
        return [
            self.define("FXDIV_BUILD_TESTS", False),
            self.define("FXDIV_BUILD_BENCHMARKS", False),
        ]
'''

# loads, but concretization fails on a dependency nobody has heard of
FXDIV_UNKNOWN_DEP = FXDIV_OK.replace('depends_on("c", type="build")',
                                     'depends_on("c", type="build")\n    depends_on("libfrobnicate")')
FXDIV_SYNTAX = FXDIV_OK.replace('version("master", branch="master")', 'version("master", branch="master"')
# loads but has no versions: concretize fails
FXDIV_NO_VERSIONS = FXDIV_OK.replace('    version("master", branch="master")\n', "")


def read(path: Path) -> str:
    return path.read_text()


def scripted(*responses: str, pattern: str = ".*") -> gateway.ModelHandle:
    """A mock model that answers every prompt with ``responses`` in order."""
    return gateway.ModelHandle(script=[gateway.ScriptRule(pattern, list(responses))])


def stub_sandbox(**stub) -> SandboxConfig:
    return SandboxConfig.from_dict({"kind": "stub", "stub": stub})


def session_cfg(model, **kw) -> SessionConfig:
    base = dict(k_max=5, reference_strategy="none", reference_count=0, model=model, sandbox=stub_sandbox())
    base.update(kw)
    return SessionConfig(**base)


@pytest.fixture
def fxdiv_repo() -> Path:
    return FIXTURES / "repos" / "fxdiv"


@pytest.fixture
def cabana_repo() -> Path:
    return FIXTURES / "repos" / "cabana-pd"


@pytest.fixture
def fxdiv_pair() -> tuple[str, str]:
    return read(CORPUS / "fxdiv.py"), read(CORPUS / "fxdiv_generated.py")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import CRITERIA, RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key, _, _ in CRITERIA:
        if key in RESULTS:
            status, detail = RESULTS[key]
            terminalreporter.write_line(f"{status} {key}: {detail}")
