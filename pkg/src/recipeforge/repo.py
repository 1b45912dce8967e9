"""Repository analysis: CMake hint extraction, directory maps and distillation."""

from __future__ import annotations

import json
import logging
import math
import os
import re
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import yaml

from ._text import truncate
from .cmake import Command, parse_commands
from .errors import NoBuildSystemError
from .recipe import VersionDecl

log = logging.getLogger(__name__)

SKIP_DIRS = frozenset({".git", ".hg", ".svn", "build", "_build", "_deps", "third_party", "thirdparty",
                       "3rdparty", "extern", "external", "vendor", "node_modules", "__pycache__"})
DOC_GLOBS = ("README", "README.md", "README.rst", "README.txt")
FRAGMENT_CAP = 2000
DOC_EXCERPT = 2000

_LANG_HINTS = {"c": "c", "cxx": "cxx", "fortran": "fortran"}
_LANG_FEATURES = {"cuda": "cuda", "hip": "rocm", "fortran": "fortran"}
_PKG_FEATURES = {
    "mpi": "mpi", "openmp": "openmp", "cuda": "cuda", "cudatoolkit": "cuda", "hip": "rocm",
    "python": "python", "python3": "python", "pythoninterp": "python", "pythonlibs": "python",
    "pybind11": "python", "nanobind": "python",
}
_OPTION_FEATURES = (("cuda", "cuda"), ("hip", "rocm"), ("rocm", "rocm"), ("mpi", "mpi"), ("openmp", "openmp"),
                    ("python", "python"), ("fortran", "fortran"), ("test", "tests"), ("bench", "benchmarks"))
_OPTION_PREFIXES = ("enable_", "with_", "use_", "build_")
SYNONYMS = {
    "test": "tests", "testing": "tests", "unit_tests": "tests",
    "bench": "benchmarks", "benchmark": "benchmarks",
    "doc": "docs", "documentation": "docs",
    "example": "examples",
}
_VERSION_OPS_RE = re.compile(r"[<>=!~].*$")
_TAG_RE = re.compile(r"^v?(\d+(?:\.\d+)*)$")


@lru_cache(maxsize=1)
def _alias_data() -> tuple[dict[str, str], frozenset[str]]:
    raw = json.loads(resources.files("recipeforge").joinpath("data", "package_aliases.json").read_text())
    return dict(raw["aliases"]), frozenset(raw.get("ignore", ()))


def package_alias(name: str) -> str:
    """Map a find_package/pkg-config name to a package-manager name."""
    aliases, _ = _alias_data()
    key = name.strip().lower()
    return aliases.get(key, key)


def normalize_identifier(name: str) -> str:
    key = name.strip().lower()
    return SYNONYMS.get(key, key)


def normalize_option(raw: str, project: str = "", package: str = "") -> str:
    """CabanaPD_ENABLE_HDF5 -> hdf5, BUILD_TESTING -> tests."""
    name = raw.strip().lower()
    for prefix in {p for p in (project.lower(), package.lower().replace("-", "_")) if p}:
        if name.startswith(prefix + "_") and len(name) > len(prefix) + 1:
            name = name[len(prefix) + 1:]
            break
    for prefix in _OPTION_PREFIXES:
        if name.startswith(prefix) and len(name) > len(prefix):
            name = name[len(prefix):]
            break
    return normalize_identifier(name)


# --------------------------------------------------------------------------
# data types


@dataclass
class TreeMap:
    entries: list[str] = field(default_factory=list)
    # directory ("" for the root) -> number of children left out by the caps
    overflow: dict[str, int] = field(default_factory=dict)
    max_depth: int = 4
    max_entries: int = 400

    def render(self) -> str:
        lines = list(self.entries)
        for directory, count in sorted(self.overflow.items()):
            lines.append(f"{directory or '.'}/... (+{count} more)")
        return "\n".join(lines)

    def to_dict(self) -> dict[str, Any]:
        return {"entries": self.entries, "overflow": self.overflow,
                "max_depth": self.max_depth, "max_entries": self.max_entries}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TreeMap":
        return cls(list(data.get("entries", [])), dict(data.get("overflow", {})),
                   data.get("max_depth", 4), data.get("max_entries", 400))


@dataclass
class BuildOption:
    raw: str
    normalized: str
    description: str = ""
    default: str = ""
    origin: str = ""  # path:line


@dataclass
class RepoMetadata:
    package_name: str
    build_system: str = "cmake"
    dependency_hints: set[str] = field(default_factory=set)
    build_options: set[str] = field(default_factory=set)
    feature_hints: set[str] = field(default_factory=set)
    language_requirements: list[tuple[str, str]] = field(default_factory=list)
    version_info: VersionDecl | None = None
    tree: TreeMap = field(default_factory=TreeMap)
    raw_fragments: list[tuple[str, str]] = field(default_factory=list)
    project_name: str = ""
    options: list[BuildOption] = field(default_factory=list)
    # normalized identifier -> raw text it was derived from
    provenance: dict[str, str] = field(default_factory=dict)
    build_files: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        v = self.version_info
        return {
            "package_name": self.package_name,
            "build_system": self.build_system,
            "project_name": self.project_name,
            "dependency_hints": sorted(self.dependency_hints),
            "build_options": sorted(self.build_options),
            "feature_hints": sorted(self.feature_hints),
            "language_requirements": [list(x) for x in self.language_requirements],
            "version_info": None if v is None else {"version": v.version_string, "url": v.source_url,
                                                    "checksum": v.checksum},
            "tree": self.tree.to_dict(),
            "raw_fragments": [list(x) for x in self.raw_fragments],
            "options": [vars(o) for o in self.options],
            "provenance": dict(sorted(self.provenance.items())),
            "build_files": self.build_files,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RepoMetadata":
        v = data.get("version_info")
        return cls(
            package_name=data["package_name"],
            build_system=data.get("build_system", "cmake"),
            project_name=data.get("project_name", ""),
            dependency_hints=set(data.get("dependency_hints", ())),
            build_options=set(data.get("build_options", ())),
            feature_hints=set(data.get("feature_hints", ())),
            language_requirements=[tuple(x) for x in data.get("language_requirements", ())],
            version_info=None if not v else VersionDecl(v["version"], v.get("url"), v.get("checksum")),
            tree=TreeMap.from_dict(data.get("tree", {})),
            raw_fragments=[tuple(x) for x in data.get("raw_fragments", ())],
            options=[BuildOption(**o) for o in data.get("options", ())],
            provenance=dict(data.get("provenance", {})),
            build_files=list(data.get("build_files", ())),
        )


@dataclass
class DistilledMetadata:
    text: str
    token_estimate: int
    source: str = "rule_based"  # or "llm_assisted"


def estimate_tokens(text: str) -> int:
    return max(1, math.ceil(len(text) / 4))


# --------------------------------------------------------------------------
# directory map


def map_tree(repo_root: str | os.PathLike, max_depth: int = 4, max_entries: int = 400,
             per_dir_cap: int = 50) -> TreeMap:
    """Breadth-first listing of the repository, capped and sorted.

    Directories end in "/".  Children beyond ``per_dir_cap`` or beyond the
    global ``max_entries`` are counted in ``overflow`` under their parent.
    Symlinked directories that point back into the walked tree are skipped.
    """
    root = Path(repo_root)
    if not root.is_dir():
        raise NotADirectoryError(f"not a directory: {root}") if root.exists() else FileNotFoundError(str(root))
    seen = {root.resolve()}
    entries: list[str] = []
    overflow: dict[str, int] = {}
    queue: deque[tuple[Path, str, int]] = deque([(root, "", 1)])
    while queue:
        directory, rel, depth = queue.popleft()
        try:
            children = sorted(os.scandir(directory), key=lambda e: e.name)
        except OSError as exc:
            if directory == root:
                raise
            log.warning("cannot list %s: %s", directory, exc)
            continue
        listed = 0
        for child in children:
            if child.name in (".git", ".hg", ".svn"):
                continue
            child_rel = f"{rel}{child.name}"
            try:
                is_dir = child.is_dir()
            except OSError:
                is_dir = False
            if is_dir:
                target = Path(child.path).resolve()
                if target in seen or (child.is_symlink() and (target == root.resolve() or root.resolve() in target.parents)):
                    continue  # cycle or alias of an already listed directory
                seen.add(target)
            if listed >= per_dir_cap or len(entries) >= max_entries:
                overflow[rel.rstrip("/")] = overflow.get(rel.rstrip("/"), 0) + 1
                continue
            listed += 1
            entries.append(child_rel + ("/" if is_dir else ""))
            if is_dir and depth < max_depth:
                queue.append((Path(child.path), child_rel + "/", depth + 1))
    return TreeMap(sorted(entries), dict(sorted(overflow.items())), max_depth, max_entries)


# --------------------------------------------------------------------------
# metadata extraction


def _build_files(root: Path, max_depth: int = 6) -> list[Path]:
    found: list[Path] = []
    for dirpath, dirnames, filenames in os.walk(root):
        rel_depth = len(Path(dirpath).relative_to(root).parts)
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS and rel_depth < max_depth)
        for name in sorted(filenames):
            if name == "CMakeLists.txt" or name.endswith(".cmake"):
                found.append(Path(dirpath) / name)
    # top-level CMakeLists first, then by path
    return sorted(found, key=lambda p: (p.parent != root or p.name != "CMakeLists.txt", str(p.relative_to(root))))


def load_version_sidecar(path: str | os.PathLike) -> VersionDecl:
    """Read a version sidecar (YAML or JSON: version, url, checksum/sha256)."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    if "version" not in data:
        raise ValueError(f"{path}: version sidecar needs a 'version' field")
    checksum = data.get("checksum") or data.get("sha256")
    return VersionDecl(str(data["version"]), data.get("url"), checksum)


def latest_release(tags: Iterable[str]) -> str | None:
    best: tuple[int, ...] | None = None
    best_tag = None
    for tag in tags:
        m = _TAG_RE.match(tag.strip())
        if not m:
            continue
        key = tuple(int(x) for x in m.group(1).split("."))
        if best is None or key > best:
            best, best_tag = key, m.group(1)
    return best_tag


class _Extractor:
    def __init__(self, root: Path, package_name: str | None):
        self.root = root
        self.package_name = package_name
        self.meta = RepoMetadata(package_name or "")
        self.languages: dict[str, str] = {}
        self.project_version: str | None = None
        self.saw_project_languages = False
        self.saw_project = False
        self.explicit_langs: dict[str, str] = {}

    def fragment(self, origin: str, text: str) -> None:
        if len(text) > FRAGMENT_CAP:
            text = text[:FRAGMENT_CAP] + " ..."
        self.meta.raw_fragments.append((origin, text))

    def hint(self, raw: str, origin: str, cmd: Command) -> None:
        aliases_ignore = _alias_data()[1]
        if "${" in raw or "$<" in raw or not raw:
            return
        if raw.lower() in aliases_ignore:
            return
        name = package_alias(raw)
        self.meta.dependency_hints.add(name)
        self.meta.provenance.setdefault(name, raw)
        feature = _PKG_FEATURES.get(raw.lower())
        if feature:
            self.meta.feature_hints.add(feature)

    def language(self, lang: str, standard: str = "") -> None:
        key = lang.lower()
        if key not in ("c", "cxx", "fortran", "cuda", "hip"):
            return
        self.explicit_langs.setdefault(key, lang)
        if standard or key not in self.languages:
            self.languages[key] = standard or self.languages.get(key, "")

    def option(self, cmd: Command, origin: str, default: str, description: str) -> None:
        raw = cmd.args[0].value
        if "${" in raw:
            return
        norm = normalize_option(raw, self.meta.project_name, self.package_name or "")
        self.meta.options.append(BuildOption(raw, norm, description, default, origin))
        self.meta.build_options.update({raw.lower(), norm})
        self.meta.provenance.setdefault(norm, raw)
        self.meta.provenance.setdefault(raw.lower(), raw)
        for needle, feature in _OPTION_FEATURES:
            if needle in norm:
                self.meta.feature_hints.add(feature)

    def command(self, cmd: Command, rel: str) -> None:
        origin = f"{rel}:{cmd.line}"
        vals = cmd.values()
        name = cmd.name
        if name in ("find_package", "find_dependency") and vals:
            self.fragment(origin, cmd.source)
            self.hint(vals[0], origin, cmd)
        elif name in ("pkg_check_modules", "pkg_search_module") and len(vals) > 1:
            self.fragment(origin, cmd.source)
            for mod in vals[1:]:
                if mod.isupper() or mod.startswith("${"):
                    continue  # REQUIRED, QUIET, IMPORTED_TARGET, GLOBAL...
                self.hint(_VERSION_OPS_RE.sub("", mod), origin, cmd)
        elif name == "cmake_minimum_required":
            self.fragment(origin, cmd.source)
            self.meta.dependency_hints.add("cmake")
            self.meta.provenance.setdefault("cmake", "cmake_minimum_required")
        elif name == "project" and vals:
            self.fragment(origin, cmd.source)
            if not self.saw_project:
                self.saw_project = True
                self.meta.project_name = vals[0]
            keywords = {"VERSION", "LANGUAGES", "DESCRIPTION", "HOMEPAGE_URL"}
            mode = "LANGUAGES"  # bare arguments after the name are languages
            for v in vals[1:]:
                if v.upper() in keywords:
                    mode = v.upper()
                    continue
                if mode == "VERSION" and self.project_version is None and "${" not in v:
                    self.project_version = v
                elif mode == "LANGUAGES" and v.upper() != "NONE":
                    self.saw_project_languages = True
                    self.language(v)
        elif name == "enable_language" and vals:
            self.fragment(origin, cmd.source)
            for v in vals:
                if v.upper() != "OPTIONAL":
                    self.language(v)
        elif name == "option" and vals:
            self.fragment(origin, cmd.source)
            desc = vals[1] if len(vals) > 1 else ""
            default = vals[2] if len(vals) > 2 else "OFF"
            self.option(cmd, origin, default, desc)
        elif name == "cmake_dependent_option" and len(vals) >= 3:
            self.fragment(origin, cmd.source)
            self.option(cmd, origin, vals[2], vals[1])
        elif name == "set" and len(vals) >= 4:
            upper = [v.upper() for v in vals]
            if vals[0].upper().startswith("CMAKE_") and vals[0].upper().endswith("_STANDARD"):
                self.fragment(origin, cmd.source)
                self.language(vals[0][6:-9], vals[1])
            elif "CACHE" in upper and upper.index("CACHE") + 1 < len(upper) \
                    and upper[upper.index("CACHE") + 1] == "BOOL":
                self.fragment(origin, cmd.source)
                idx = upper.index("CACHE")
                desc = vals[idx + 2] if len(vals) > idx + 2 else ""
                self.option(cmd, origin, vals[1], desc)
        elif name == "set" and len(vals) >= 2 and vals[0].upper().startswith("CMAKE_") \
                and vals[0].upper().endswith("_STANDARD"):
            self.fragment(origin, cmd.source)
            self.language(vals[0][6:-9], vals[1])
        elif name in ("target_compile_features", "target_compile_options") and vals:
            for v in vals:
                m = re.fullmatch(r"(c|cxx|cuda)_std_(\d+)", v.lower())
                if m:
                    self.fragment(origin, cmd.source)
                    self.language(m.group(1), m.group(2))
        elif name == "enable_testing":
            self.fragment(origin, cmd.source)
            self.meta.feature_hints.add("tests")
        elif name == "include" and vals and vals[0] in ("CTest", "GoogleTest"):
            self.fragment(origin, cmd.source)
            self.meta.feature_hints.add("tests")

    def finish(self) -> None:
        if self.saw_project and not self.saw_project_languages:
            # CMake's default when project() names no languages
            for lang in ("c", "cxx"):
                self.languages.setdefault(lang, "")
                self.explicit_langs.setdefault(lang, "project")
        for lang, std in self.languages.items():
            if lang in _LANG_HINTS:
                self.meta.dependency_hints.add(_LANG_HINTS[lang])
                self.meta.provenance.setdefault(_LANG_HINTS[lang], self.explicit_langs.get(lang, lang))
            if lang in _LANG_FEATURES:
                self.meta.feature_hints.add(_LANG_FEATURES[lang])
        self.meta.language_requirements = sorted(self.languages.items())


def extract_metadata(repo_root: str | os.PathLike, *, package_name: str | None = None,
                     version: VersionDecl | None = None, releases: Iterable[str] | None = None,
                     source_url: str | None = None, max_depth: int = 4, max_entries: int = 400) -> RepoMetadata:
    """Scan a CMake repository and collect build hints.

    Version information comes from, in order: the explicit ``version``
    argument (CLI flag or sidecar), the newest tag in ``releases``, then
    ``project(... VERSION x)``.
    """
    root = Path(repo_root)
    if not root.exists():
        raise FileNotFoundError(f"repository not found: {root}")
    if not root.is_dir():
        raise NotADirectoryError(f"not a directory: {root}")
    files = _build_files(root)
    if not files:
        raise NoBuildSystemError(f"no CMakeLists.txt or *.cmake file under {root}")

    ex = _Extractor(root, package_name)
    for path in files:
        rel = path.relative_to(root).as_posix()
        ex.meta.build_files.append(rel)
        text = path.read_text(encoding="utf-8", errors="replace")
        for cmd in parse_commands(text):
            ex.command(cmd, rel)
    ex.finish()
    for doc in DOC_GLOBS:
        p = root / doc
        if p.is_file():
            ex.fragment(doc, p.read_text(encoding="utf-8", errors="replace")[:DOC_EXCERPT])
            break

    meta = ex.meta
    if not meta.package_name:
        base = meta.project_name or root.resolve().name
        meta.package_name = base.lower().replace("_", "-")
    if version is None and releases is not None:
        tag = latest_release(releases)
        if tag:
            version = VersionDecl(tag, source_url)
    if version is None and ex.project_version:
        version = VersionDecl(ex.project_version, source_url)
    if version is not None and source_url and not version.source_url:
        version = VersionDecl(version.version_string, source_url, version.checksum)
    meta.version_info = version
    meta.tree = map_tree(root, max_depth=max_depth, max_entries=max_entries)
    return meta


# --------------------------------------------------------------------------
# distillation


def rule_based_outline(meta: RepoMetadata) -> str:
    covered: set[str] = set()
    shown: list[str] = []
    for opt in sorted(meta.options, key=lambda o: o.normalized):
        if opt.normalized in covered:
            continue
        covered.update({opt.raw.lower(), opt.normalized})
        shown.append(opt.normalized if opt.normalized == opt.raw.lower() else f"{opt.normalized} ({opt.raw})")
    shown += sorted(meta.build_options - covered)
    langs = ", ".join(f"{lang} {std}".strip() for lang, std in meta.language_requirements)
    lines = [
        f"build system: {meta.build_system}",
        f"project: {meta.project_name or meta.package_name}",
        f"languages: {langs}",
        f"dependencies: {', '.join(sorted(meta.dependency_hints))}",
        f"options: {', '.join(shown)}",
        f"features: {', '.join(sorted(meta.feature_hints))}",
    ]
    if meta.version_info is not None:
        lines.append(f"version: {meta.version_info.version_string}")
    details = [f"  {o.raw} [{o.default}] {o.description}".rstrip() for o in meta.options]
    if details:
        lines.append("option details:")
        lines += details
    if meta.build_files:
        lines.append(f"files: {', '.join(meta.build_files)}")
    evidence = [f"  {origin}: {' '.join(text.split())}" for origin, text in meta.raw_fragments]
    if evidence:
        lines.append("evidence:")
        lines += evidence
    return "\n".join(lines)


def distill(meta: RepoMetadata, mode: str = "rule_based", llm: Any = None, budget: int = 8000) -> DistilledMetadata:
    """Compress metadata for the prompt.

    ``rule_based`` is a deterministic outline cut at ``budget`` characters;
    ``llm_assisted`` asks the model handle to summarize the raw fragments.
    """
    if budget <= 0:
        raise ValueError("distillation budget must be positive")
    if mode == "rule_based":
        text = truncate(rule_based_outline(meta), budget)
        return DistilledMetadata(text, estimate_tokens(text), "rule_based")
    if mode == "llm_assisted":
        if llm is None:
            raise ValueError("llm_assisted distillation needs a model handle")
        from . import gateway, prompts

        spec = prompts.distill_prompt(meta, budget=budget)
        result = gateway.complete(llm, spec)
        text = truncate(result.text.strip(), budget)
        return DistilledMetadata(text, estimate_tokens(text), "llm_assisted")
    raise ValueError(f"unknown distillation mode {mode!r}")
