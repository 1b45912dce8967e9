"""Staged validation of candidate recipes: load, concretize, install, audit.

Every command runs through a :class:`Sandbox`.  Three are provided:

* ``container``: docker/podman with the work directory mounted at ``/work``;
* ``process``: plain subprocesses with all package-manager state redirected
  into the work directory.  It does **not** isolate anything and exists for
  CI machines that already run inside a throwaway VM;
* ``stub``: an in-process emulator of the package manager used by hermetic
  tests.  It understands just enough of the recipe dialect to fail in the
  same places a real run would for the common mistakes.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import shutil
import subprocess
import tempfile
import threading
import time
import uuid
from importlib import resources
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Protocol

from ._text import truncate
from .errors import ParseError, SandboxError
from .failures import FailureClass, classify_failure
from .recipe import Recipe, parse_recipe, pascal_case

log = logging.getLogger(__name__)

STAGES = ("load", "concretize", "install")

_AUDIT_SECTION_RE = re.compile(r"^([A-Z][A-Z0-9_-]+):\s+(\d+) issues? found", re.M)
_AUDIT_ITEM_RE = re.compile(r"^\s*\d+\.\s+(.*\S)\s*$")
_IMPORT_RE = re.compile(r"^\s*(from|import)\s", re.M)


# --------------------------------------------------------------------------
# reports


@dataclass
class StageResult:
    stage: str
    passed: bool
    log_excerpt: str = ""
    duration: float = 0.0
    exit_code: int = 0
    timed_out: bool = False

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StageResult":
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass
class AuditReport:
    findings: list[tuple[str, str]] = field(default_factory=list)
    synthesized: bool = False  # findings were made up locally, not reported by the tool

    @property
    def passed(self) -> bool:
        return not self.findings

    def lines(self) -> list[str]:
        return [f"{check}: {message}" for check, message in self.findings]

    def to_dict(self) -> dict[str, Any]:
        return {"findings": [list(f) for f in self.findings], "passed": self.passed,
                "synthesized": self.synthesized}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AuditReport":
        return cls([tuple(f) for f in data.get("findings", ())], data.get("synthesized", False))


@dataclass
class EvaluationReport:
    stages: list[StageResult]
    failure: FailureClass
    recipe_text: str
    sandbox_id: str
    package_name: str = ""
    audit: AuditReport | None = None

    def passed(self, stage: str) -> bool:
        return any(s.stage == stage and s.passed for s in self.stages)

    @property
    def installed(self) -> bool:
        return self.passed("install")

    def stage_flags(self) -> dict[str, bool]:
        return {stage: self.passed(stage) for stage in STAGES}

    def failed_stage(self) -> StageResult | None:
        return next((s for s in self.stages if not s.passed), None)

    def to_dict(self) -> dict[str, Any]:
        return {"package_name": self.package_name, "sandbox_id": self.sandbox_id,
                "stages": [s.to_dict() for s in self.stages], "failure": self.failure.to_dict(),
                "audit": None if self.audit is None else self.audit.to_dict(), "recipe_text": self.recipe_text}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvaluationReport":
        audit = data.get("audit")
        return cls([StageResult.from_dict(s) for s in data["stages"]], FailureClass.from_dict(data["failure"]),
                   data.get("recipe_text", ""), data.get("sandbox_id", ""), data.get("package_name", ""),
                   None if audit is None else AuditReport.from_dict(audit))


# --------------------------------------------------------------------------
# configuration


DEFAULT_COMMANDS = {
    "load": "{spack} -C {config} info {package}",
    "concretize": "{spack} -C {config} spec {package}",
    "install": "{spack} -C {config} install {install_flags} {package}",
    "audit": "{spack} -C {config} audit packages {package}",
}

DEFAULT_FILES = {
    "repo/repo.yaml": "repo:\n  namespace: {namespace}\n",
    "config/repos.yaml": "repos:\n- {work}/repo\n",
    "config/config.yaml": ("config:\n  build_stage:\n  - {work}/stage\n  source_cache: {work}/cache/source\n"
                           "  misc_cache: {work}/cache/misc\n  install_tree:\n    root: {work}/opt\n"),
}

def _known_packages() -> frozenset[str]:
    text = resources.files("recipeforge").joinpath("data", "known_packages.txt").read_text()
    return frozenset(ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#"))


_KNOWN_PACKAGES = _known_packages()

_MIXIN_VARIANTS = {
    "CMakePackage": {"build_type", "ipo", "generator"},
    "CachedCMakePackage": {"build_type", "ipo", "generator"},
    "CudaPackage": {"cuda", "cuda_arch"},
    "ROCmPackage": {"rocm", "amdgpu_target"},
}
_KNOWN_BASES = frozenset(
    {"Package", "CMakePackage", "CachedCMakePackage", "AutotoolsPackage", "MakefilePackage", "MesonPackage",
     "PythonPackage", "BundlePackage", "CudaPackage", "ROCmPackage", "SConsPackage", "QMakePackage"})


@dataclass
class StubHook:
    """Fail ``stage`` with ``log`` whenever ``pattern`` matches the recipe text."""

    stage: str
    pattern: str
    log: str
    exit_code: int = 1


@dataclass
class StubOptions:
    known_packages: frozenset[str] = _KNOWN_PACKAGES
    extra_packages: frozenset[str] = frozenset()
    # package -> dependencies its build needs (missing ones fail the install)
    required_dependencies: dict[str, list[str]] = field(default_factory=dict)
    hooks: list[StubHook] = field(default_factory=list)
    extra_audit_findings: list[tuple[str, str]] = field(default_factory=list)
    delay: float = 0.0  # seconds per stage, to exercise timeouts

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StubOptions":
        data = dict(data or {})
        return cls(
            known_packages=frozenset(data.get("known_packages") or _KNOWN_PACKAGES),
            extra_packages=frozenset(data.get("extra_packages", ())),
            required_dependencies={k: list(v) for k, v in (data.get("required_dependencies") or {}).items()},
            hooks=[StubHook(**h) for h in data.get("hooks", ())],
            extra_audit_findings=[tuple(f) for f in data.get("extra_audit_findings", ())],
            delay=float(data.get("delay", 0.0)),
        )


@dataclass
class SandboxConfig:
    kind: str = "container"  # container | process | stub
    image: str = "spack/ubuntu-jammy:latest"
    runtime: str = "docker"
    network: bool = True
    spack: str = "spack"
    namespace: str = "recipeforge"
    workdir_root: str | None = None
    keep_workdir: bool = False
    timeouts: dict[str, float] = field(default_factory=lambda: {
        "load": 60.0, "concretize": 300.0, "install": 3600.0, "audit": 120.0})
    binary_cache: bool = True
    install_flags: dict[str, str] = field(default_factory=lambda: {
        "cache": "--use-buildcache package:never,dependencies:auto --no-check-signature",
        "no_cache": "--use-buildcache never",
    })
    commands: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_COMMANDS))
    files: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_FILES))
    log_cap: int = 65_536
    always_audit: bool = False
    stub: StubOptions = field(default_factory=StubOptions)

    def __post_init__(self) -> None:
        if self.kind not in ("container", "process", "stub"):
            raise ValueError(f"unknown sandbox kind {self.kind!r}")
        if self.log_cap < 256:
            raise ValueError("log_cap must be at least 256 characters")

    def timeout(self, stage: str) -> float:
        return float(self.timeouts.get(stage, 600.0))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SandboxConfig":
        data = dict(data or {})
        kwargs: dict[str, Any] = {}
        for f in fields(cls):
            if f.name not in data or data[f.name] is None:
                continue
            value = data[f.name]
            if f.name == "stub":
                value = StubOptions.from_dict(value)
            elif f.name in ("timeouts", "commands", "files", "install_flags"):
                value = {**getattr(cls(), f.name), **value}
            kwargs[f.name] = value
        return cls(**kwargs)


# --------------------------------------------------------------------------
# sandboxes


@dataclass
class RunResult:
    output: str
    exit_code: int
    duration: float
    timed_out: bool = False


class Sandbox(Protocol):
    kind: str
    isolating: bool

    def sandbox_path(self, host: Path) -> str: ...

    def execute(self, stage: str, command: str, work: Path, package: str, timeout: float) -> RunResult: ...


def _run(argv: list[str], timeout: float, env: dict[str, str] | None = None, cwd: Path | None = None,
         on_timeout: Any = None) -> RunResult:
    start = time.monotonic()
    try:
        proc = subprocess.run(argv, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
                              errors="replace", timeout=timeout, env=env, cwd=cwd)
    except subprocess.TimeoutExpired as exc:
        if on_timeout is not None:
            on_timeout()
        out = exc.output or ""
        if isinstance(out, bytes):
            out = out.decode(errors="replace")
        return RunResult(out, -1, time.monotonic() - start, True)
    except OSError as exc:
        raise SandboxError(f"could not start {argv[0]}: {exc}") from exc
    return RunResult(proc.stdout, proc.returncode, time.monotonic() - start)


class ContainerSandbox:
    kind = "container"
    isolating = True
    MOUNT = "/work"

    def __init__(self, config: SandboxConfig):
        self.config = config
        if shutil.which(config.runtime) is None:
            raise SandboxError(f"container runtime {config.runtime!r} not found on PATH")

    def sandbox_path(self, host: Path) -> str:
        return self.MOUNT

    def execute(self, stage: str, command: str, work: Path, package: str, timeout: float) -> RunResult:
        cfg = self.config
        name = f"recipeforge-{uuid.uuid4().hex[:12]}"
        argv = [cfg.runtime, "run", "--rm", "--name", name, "-v", f"{work}:{self.MOUNT}", "-w", self.MOUNT,
                "-e", f"SPACK_USER_CONFIG_PATH={self.MOUNT}/.spack",
                "-e", f"SPACK_USER_CACHE_PATH={self.MOUNT}/.spack-cache"]
        if not cfg.network:
            argv += ["--network", "none"]
        argv += [cfg.image, "bash", "-lc", command]

        def kill() -> None:
            subprocess.run([cfg.runtime, "kill", name], stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
                           check=False)

        res = _run(argv, timeout, on_timeout=kill)
        # 125: the runtime itself failed; 126/127: the command could not be run in the image
        if res.exit_code in (125, 126, 127):
            raise SandboxError(f"{cfg.runtime} exited {res.exit_code}: {truncate(res.output, 2000, tail=True)}")
        return res


class ProcessSandbox:
    """Runs the package manager directly on the host.  Not isolating."""

    kind = "process"
    isolating = False
    _warned = False

    def __init__(self, config: SandboxConfig):
        self.config = config
        if shutil.which(config.spack) is None:
            raise SandboxError(f"package manager executable {config.spack!r} not found on PATH")
        if not ProcessSandbox._warned:
            log.warning("process sandbox does not isolate builds from the host")
            ProcessSandbox._warned = True

    def sandbox_path(self, host: Path) -> str:
        return str(host)

    def execute(self, stage: str, command: str, work: Path, package: str, timeout: float) -> RunResult:
        env = dict(os.environ)
        env.update({
            "HOME": str(work),
            "TMPDIR": str(work / "tmp"),
            "SPACK_USER_CONFIG_PATH": str(work / ".spack"),
            "SPACK_USER_CACHE_PATH": str(work / ".spack-cache"),
            "SPACK_DISABLE_LOCAL_CONFIG": "1",
        })
        (work / "tmp").mkdir(exist_ok=True)
        res = _run(["bash", "-c", command], timeout, env=env, cwd=work)
        if res.exit_code in (126, 127):
            raise SandboxError(f"command could not be run: {truncate(res.output, 2000, tail=True)}")
        return res


class StubSandbox:
    """Hermetic emulator of the package-manager commands."""

    kind = "stub"
    isolating = True

    def __init__(self, config: SandboxConfig):
        self.config = config
        self.options = config.stub

    def sandbox_path(self, host: Path) -> str:
        return str(host)

    def execute(self, stage: str, command: str, work: Path, package: str, timeout: float) -> RunResult:
        start = time.monotonic()
        if self.options.delay:
            if self.options.delay > timeout:
                time.sleep(timeout)
                return RunResult(f"==> {stage}: still running when the time limit was hit\n", -1,
                                 time.monotonic() - start, True)
            time.sleep(self.options.delay)
        rel = _recipe_relpath(package)
        text = (work / rel).read_text()
        for hook in self.options.hooks:
            if hook.stage == stage and re.search(hook.pattern, text):
                return RunResult(hook.log, hook.exit_code, time.monotonic() - start)
        out, code = getattr(self, f"_{stage}")(text, package, rel)
        return RunResult(out, code, time.monotonic() - start)

    # individual commands ---------------------------------------------------

    def _parse(self, text: str, package: str, rel: str) -> tuple[Recipe | None, str]:
        try:
            recipe = parse_recipe(text)
        except ParseError as exc:
            return None, (f"==> Error: Error loading package '{package}'\n"
                          f'  File "{rel}", line {exc.line or 1}\n'
                          f"SyntaxError: {exc.message}\n")
        expected = pascal_case(package)
        if recipe.class_name != expected:
            return None, (f"==> Error: Error loading package '{package}'\n"
                          f"AttributeError: module has no attribute '{expected}' "
                          f"(found class '{recipe.class_name}')\n")
        for base in recipe.base_classes:
            if base not in _KNOWN_BASES and not re.search(rf"\bimport\b.*\b{re.escape(base)}\b", text):
                return None, (f"==> Error: Error loading package '{package}'\n"
                              f'  File "{rel}", line {recipe.class_line}\n'
                              f"NameError: name '{base}' is not defined\n")
        return recipe, ""

    def _known(self, name: str, package: str) -> bool:
        return name == package or name in self.options.known_packages or name in self.options.extra_packages

    def _load(self, text: str, package: str, rel: str) -> tuple[str, int]:
        recipe, err = self._parse(text, package, rel)
        if recipe is None:
            return err, 1
        kind = (recipe.build_system_classes or ["Package"])[0]
        versions = ", ".join(v.version_string for v in recipe.versions) or "none"
        return f"{kind}:   {package}\n\nSafe versions:\n    {versions}\n", 0

    def _own_variants(self, recipe: Recipe) -> set[str]:
        names = {v.name for v in recipe.variants}
        for base in recipe.base_classes:
            names |= _MIXIN_VARIANTS.get(base, set())
        return names

    def _concretize(self, text: str, package: str, rel: str) -> tuple[str, int]:
        recipe, err = self._parse(text, package, rel)
        if recipe is None:
            return err, 1
        for dep in recipe.dependencies:
            if not self._known(dep.name, package):
                return (f"==> Error: Package '{dep.name}' not found.\n"
                        f"    required by {package} (line {dep.line})\n"), 1
        if not recipe.versions:
            return f"==> Error: There are no valid versions for {package} that match ':'\n", 1
        # conditions on undefined variants are simply never true, but a conflict
        # naming one is rejected (unless variants are generated in a loop)
        own = self._own_variants(recipe)
        if not any(d.opaque and d.name == "variant" for d in recipe.other_directives):
            for c in recipe.conflicts:
                for name in _self_variant_refs(c.spec):
                    if name not in own:
                        return f"==> Error: variant '{name}' does not exist in package {package}\n", 1
        defaults = {v.name: v.default for v in recipe.variants}
        for c in recipe.conflicts:
            if _holds(c.spec, defaults) and (c.when is None or _holds(c.when, defaults)):
                when = f" when '{c.when}'" if c.when else ""
                return f"==> Error: {package}: '{c.spec}' conflicts with the default configuration{when}\n", 1
        version = recipe.versions[0].version_string
        lines = [f" -   {package}@{version}"] + [f" -       ^{d.name}" for d in recipe.dependencies]
        return "Concretized\n--------------------------------\n" + "\n".join(lines) + "\n", 0

    def _install(self, text: str, package: str, rel: str) -> tuple[str, int]:
        out, code = self._concretize(text, package, rel)
        if code:
            return out, code
        recipe, _ = self._parse(text, package, rel)
        assert recipe is not None
        fetchable = ("url" in recipe.attributes or "git" in recipe.attributes
                     or any(v.source_url or {"url", "git"} & set(v.extra) for v in recipe.versions)
                     or any(m.name == "url_for_version" for m in recipe.methods))
        version = recipe.versions[0].version_string
        if not fetchable:
            return (f"==> Installing {package}@{version}\n"
                    f"==> Error: FetchError: All fetchers failed for spack-stage-{package}-{version}\n"), 1
        declared = {d.name for d in recipe.dependencies}
        for need in self.options.required_dependencies.get(package, ()):
            if need not in declared:
                return (f"==> Installing {package}@{version}\n==> {package}: Executing phase: 'cmake'\n"
                        f"CMake Error at CMakeLists.txt:12 (find_package):\n"
                        f'  Could not find a package configuration file provided by "{need}" with any\n'
                        f"  of the following names:\n\n    {need}Config.cmake\n\n"
                        f"-- Configuring incomplete, errors occurred!\n"
                        f"==> Error: ProcessError: Command exited with status 1\n"), 1
        return (f"==> Installing {package}@{version}\n==> {package}: Executing phase: 'cmake'\n"
                f"==> {package}: Executing phase: 'build'\n==> {package}: Executing phase: 'install'\n"
                f"==> {package}: Successfully installed {package}-{version}\n"), 0

    def _audit(self, text: str, package: str, rel: str) -> tuple[str, int]:
        recipe, err = self._parse(text, package, rel)
        findings: dict[str, list[str]] = {"PKG-ATTRIBUTES": [], "PKG-DIRECTIVES": []}
        if recipe is not None:
            fetchable = ("url" in recipe.attributes or "git" in recipe.attributes
                         or any(v.source_url or {"url", "git"} & set(v.extra) for v in recipe.versions))
            if not recipe.versions:
                findings["PKG-DIRECTIVES"].append(f"{package}: package has no version directives")
            if not fetchable:
                findings["PKG-ATTRIBUTES"].append(
                    f"{package}: missing download directive (no url, git or per-version url)")
            for name in dict.fromkeys(d.name for d in recipe.dependencies):
                if not self._known(name, package):
                    findings["PKG-DIRECTIVES"].append(f"{package}: \"{name}\" depends on a package that does "
                                                      f"not exist")
        for check, message in self.options.extra_audit_findings:
            findings.setdefault(check, []).append(message)
        out = ["==> Auditing packages"]
        for section, items in findings.items():
            out.append(f"{section}: {len(items)} issue{'s' if len(items) != 1 else ''} found")
            out += [f"{i}. {msg}" for i, msg in enumerate(items, 1)]
        return "\n".join(out) + "\n", int(any(findings.values()))


def _self_variant_refs(spec: str | None) -> list[str]:
    """Variant names a condition sets on the package itself (text before any ``^``)."""
    if not spec:
        return []
    head = spec.split("^", 1)[0].strip()
    if not head or not (head[0] in "+~@%" or "=" in head.split()[0]):
        return []
    names = []
    for m in re.finditer(r"[+~]([A-Za-z0-9_-]+)|([A-Za-z0-9_]+)=", head):
        names.append(m.group(1) or m.group(2))
    return names


def _holds(spec: str, defaults: dict[str, Any]) -> bool:
    """True when a pure variant spec (``+a~b``) is satisfied by the defaults."""
    spec = spec.strip()
    if not spec or spec[0] not in "+~":
        return False
    for sign, name in re.findall(r"([+~])([A-Za-z0-9_-]+)", spec):
        value = defaults.get(name)
        if not isinstance(value, bool) or value != (sign == "+"):
            return False
    return True


def make_sandbox(config: SandboxConfig) -> Sandbox:
    return {"container": ContainerSandbox, "process": ProcessSandbox, "stub": StubSandbox}[config.kind](config)


# --------------------------------------------------------------------------
# evaluation


def _recipe_relpath(package: str) -> str:
    return f"repo/packages/{package}/package.py"


def _with_imports(text: str) -> str:
    return text if _IMPORT_RE.search(text) else "from spack.package import *\n\n\n" + text


class _Workspace:
    """A fresh work directory holding the package repository and config scope."""

    def __init__(self, config: SandboxConfig, sandbox: Sandbox, package: str, recipe_text: str):
        root = config.workdir_root
        if root is not None:
            Path(root).mkdir(parents=True, exist_ok=True)
        self.path = Path(tempfile.mkdtemp(prefix=f"rf-{package}-", dir=root))
        self.config = config
        inside = sandbox.sandbox_path(self.path)
        values = {"work": inside, "namespace": config.namespace, "package": package}
        for rel, template in config.files.items():
            target = self.path / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(template.format(**values))
        recipe_file = self.path / _recipe_relpath(package)
        recipe_file.parent.mkdir(parents=True, exist_ok=True)
        recipe_file.write_text(_with_imports(recipe_text))
        flags = config.install_flags["cache" if config.binary_cache else "no_cache"]
        self.values = {"spack": config.spack, "config": f"{inside}/config", "package": package,
                       "install_flags": flags, "work": inside}

    def command(self, stage: str) -> str:
        return self.config.commands[stage].format(**self.values)

    def close(self) -> None:
        if not self.config.keep_workdir:
            shutil.rmtree(self.path, ignore_errors=True)


def _cap(text: str, cap: int) -> str:
    # the end of a log carries the error, so keep the tail
    return truncate(text, cap, tail=True)


def _run_stage(sandbox: Sandbox, ws: _Workspace, stage: str, package: str, cfg: SandboxConfig) -> StageResult:
    limit = cfg.timeout(stage)
    res = sandbox.execute(stage, ws.command(stage), ws.path, package, limit)
    text = res.output
    if res.timed_out:
        text += f"\n==> {stage} stage timed out after {limit:g} s\n"
    return StageResult(stage, res.exit_code == 0 and not res.timed_out, _cap(text, cfg.log_cap),
                       res.duration, res.exit_code, res.timed_out)


def parse_audit_output(text: str) -> list[tuple[str, str]]:
    """One (check id, message) pair per numbered item under a ``SECTION: N issues found`` header."""
    findings: list[tuple[str, str]] = []
    section = None
    for line in text.splitlines():
        head = _AUDIT_SECTION_RE.match(line)
        if head:
            section = head.group(1)
            continue
        item = _AUDIT_ITEM_RE.match(line)
        if item and section is not None:
            findings.append((section, item.group(1)))
    return findings


def _audit_in(sandbox: Sandbox, ws: _Workspace, package: str, cfg: SandboxConfig) -> AuditReport:
    res = sandbox.execute("audit", ws.command("audit"), ws.path, package, cfg.timeout("audit"))
    if res.timed_out:
        return AuditReport([("audit", f"audit timed out after {cfg.timeout('audit'):g} s")], True)
    findings = parse_audit_output(res.output)
    if res.exit_code and not findings:
        last = next((ln for ln in reversed(res.output.splitlines()) if ln.strip()), "no output")
        return AuditReport([("audit", f"audit command failed: {last.strip()}")], True)
    return AuditReport(findings)


LOAD_FAILED_FINDING = ("audit", "audit skipped: load failed")


def _sandbox_id(kind: str, package: str, text: str) -> str:
    digest = hashlib.sha256(f"{package}\0{text}".encode()).hexdigest()[:12]
    return f"{kind}-{digest}"


def evaluate(recipe_text: str, package_name: str, sandbox: SandboxConfig,
             run_audit_on_failure: bool = True, instance: Sandbox | None = None) -> EvaluationReport:
    """Run load, concretize and install in order, stopping at the first failure.

    Audit runs when a stage failed and ``run_audit_on_failure`` is set, or
    always when ``sandbox.always_audit`` is set.  Timeouts are recorded as
    failed stages (``timed_out``) rather than raised, so a batch keeps going;
    runtime failures of the sandbox itself raise :class:`SandboxError`.
    """
    if not package_name:
        raise ValueError("package_name is required")
    box = instance if instance is not None else make_sandbox(sandbox)
    ws = _Workspace(sandbox, box, package_name, recipe_text)
    try:
        stages: list[StageResult] = []
        for stage in STAGES:
            result = _run_stage(box, ws, stage, package_name, sandbox)
            stages.append(result)
            if not result.passed:
                break
        failed = any(not s.passed for s in stages)
        report: AuditReport | None = None
        if (failed and run_audit_on_failure) or sandbox.always_audit:
            if stages[0].passed:
                report = _audit_in(box, ws, package_name, sandbox)
            else:
                report = AuditReport([LOAD_FAILED_FINDING], True)
    finally:
        ws.close()
    return EvaluationReport(stages, classify_failure(stages), recipe_text,
                            _sandbox_id(box.kind, package_name, recipe_text), package_name, report)


def audit(recipe_text: str, package_name: str, sandbox: SandboxConfig,
          instance: Sandbox | None = None) -> AuditReport:
    """Static checks only.  Unloadable recipes get one synthesized finding."""
    box = instance if instance is not None else make_sandbox(sandbox)
    ws = _Workspace(sandbox, box, package_name, recipe_text)
    try:
        if not _run_stage(box, ws, "load", package_name, sandbox).passed:
            return AuditReport([LOAD_FAILED_FINDING], True)
        return _audit_in(box, ws, package_name, sandbox)
    finally:
        ws.close()


class SandboxPool:
    """Caps how many evaluations run at once across threads."""

    def __init__(self, limit: int):
        if limit < 1:
            raise ValueError("limit must be >= 1")
        self._sem = threading.BoundedSemaphore(limit)

    def evaluate(self, *args: Any, **kwargs: Any) -> EvaluationReport:
        with self._sem:
            return evaluate(*args, **kwargs)
