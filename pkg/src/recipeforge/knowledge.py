"""Package knowledge base: dependency graph, affinity ranking and chunking.

The store is a plain adjacency structure keyed by package name, persisted
as JSON.  Retrieval strategies return a :class:`ReferenceBundle` whose
items are ready to drop into a prompt.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import yaml

from .errors import DuplicateNameError, EmptyStoreError, ParseError
from .prompts import role_preamble
from .recipe import Recipe, parse_recipe
from .repo import RepoMetadata, normalize_identifier, package_alias

log = logging.getLogger(__name__)

STRATEGIES = ("none", "similar", "random", "random_same_build_system", "embedding")
DEFAULT_AFFINITY_WEIGHTS = (0.6, 0.4)

_BUILD_SYSTEM_BASES = {
    "CMakePackage": "cmake", "CachedCMakePackage": "cmake", "AutotoolsPackage": "autotools",
    "MakefilePackage": "makefile", "MesonPackage": "meson", "PythonPackage": "python",
    "BundlePackage": "bundle", "Package": "generic", "SConsPackage": "scons", "QMakePackage": "qmake",
    "CargoPackage": "cargo", "GoPackage": "go", "WafPackage": "waf", "BazelPackage": "bazel",
    "MavenPackage": "maven", "RPackage": "r", "PerlPackage": "perl", "OctavePackage": "octave",
}
_BUILD_SYSTEM_DIRECTIVE_RE = re.compile(r"""["']([a-z_]+)["']""")

_CHUNK_KINDS = {
    "variant": "variants", "conflicts": "variants", "requires": "variants",
    "depends_on": "dependencies", "provides": "dependencies", "extends": "dependencies",
}
_DIRECTIVE_LINE_RE = re.compile(r"^\s*(" + "|".join(_CHUNK_KINDS) + r")\(", re.M)


@dataclass
class PackageNode:
    name: str
    build_systems: frozenset[str]
    dependencies: frozenset[str]
    variants: frozenset[str]
    recipe_text: str
    recipe: Recipe | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "build_systems": sorted(self.build_systems),
                "dependencies": sorted(self.dependencies), "variants": sorted(self.variants),
                "recipe_text": self.recipe_text}


@dataclass
class IngestReport:
    ingested: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (name, reason)
    # package -> dependency names that are not in the store
    dangling: dict[str, list[str]] = field(default_factory=dict)


class KnowledgeStore:
    def __init__(self, nodes: Iterable[PackageNode] = ()):
        self.nodes: dict[str, PackageNode] = {}
        for node in sorted(nodes, key=lambda n: n.name):
            if node.name in self.nodes:
                raise DuplicateNameError(node.name)
            self.nodes[node.name] = node

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, name: object) -> bool:
        return name in self.nodes

    def __getitem__(self, name: str) -> PackageNode:
        return self.nodes[name]

    def names(self) -> list[str]:
        return list(self.nodes)

    def edges(self) -> dict[str, list[str]]:
        return {name: sorted(node.dependencies) for name, node in self.nodes.items()}

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name, node in self.nodes.items():
            h.update(json.dumps([name, sorted(node.build_systems), node.recipe_text]).encode())
            h.update(b"\0")
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        data = {"schema_version": 1, "content_hash": self.content_hash(),
                "packages": [n.to_dict() for n in self.nodes.values()]}
        Path(path).write_text(json.dumps(data, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeStore":
        data = json.loads(Path(path).read_text())
        nodes = []
        for p in data["packages"]:
            try:
                recipe = parse_recipe(p["recipe_text"])
            except ParseError:
                recipe = None
            nodes.append(PackageNode(p["name"], frozenset(p["build_systems"]), frozenset(p["dependencies"]),
                                     frozenset(p["variants"]), p["recipe_text"], recipe))
        return cls(nodes)


def infer_build_systems(recipe: Recipe) -> frozenset[str]:
    systems = {_BUILD_SYSTEM_BASES[b.split(".")[-1]] for b in recipe.base_classes
               if b.split(".")[-1] in _BUILD_SYSTEM_BASES}
    for d in recipe.other_directives:
        if d.name == "build_system" and not d.opaque:
            systems.update(m for m in _BUILD_SYSTEM_DIRECTIVE_RE.findall(d.source) if m != "default")
    return frozenset(systems)


def ingest(recipes: Iterable[tuple[str, str, Iterable[str] | None]]) -> tuple[KnowledgeStore, IngestReport]:
    """Parse recipes into a store; unparseable ones are reported and skipped."""
    entries = list(recipes)
    seen: set[str] = set()
    for name, _, _ in entries:
        if name in seen:
            raise DuplicateNameError(f"package {name!r} appears twice in the corpus")
        seen.add(name)
    report = IngestReport()
    nodes = []
    for name, text, systems in sorted(entries, key=lambda e: e[0]):
        try:
            recipe = parse_recipe(text)
        except ParseError as exc:
            report.skipped.append((name, str(exc)))
            log.warning("skipping %s: %s", name, exc)
            continue
        build_systems = frozenset(s.lower() for s in systems) if systems else infer_build_systems(recipe)
        nodes.append(PackageNode(
            name=name,
            build_systems=build_systems,
            dependencies=frozenset(d.name.lower() for d in recipe.dependencies),
            variants=frozenset(v.name.lower() for v in recipe.variants),
            recipe_text=text,
            recipe=recipe,
        ))
        report.ingested.append(name)
    store = KnowledgeStore(nodes)
    virtual_ok = {"c", "cxx", "fortran"}
    for node in store.nodes.values():
        missing = sorted(d for d in node.dependencies if d not in store and d not in virtual_ok)
        if missing:
            report.dangling[node.name] = missing
    return store, report


def load_corpus(directory: str | Path) -> list[tuple[str, str, list[str] | None]]:
    """Read a corpus directory.

    With a ``manifest.yaml`` (``packages: [{name, file, build_systems}]``)
    the manifest is authoritative.  Otherwise every ``<name>/package.py``
    and every top-level ``*.py`` is a recipe; underscores in file names
    become hyphens.
    """
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    manifest = root / "manifest.yaml"
    if manifest.exists():
        data = yaml.safe_load(manifest.read_text()) or {}
        out = []
        for entry in data.get("packages", []):
            text = (root / entry["file"]).read_text(encoding="utf-8", errors="replace")
            out.append((entry["name"], text, entry.get("build_systems")))
        return out
    out = []
    for path in sorted(root.glob("*/package.py")):
        out.append((path.parent.name.replace("_", "-"), path.read_text(encoding="utf-8", errors="replace"), None))
    for path in sorted(root.glob("*.py")):
        out.append((path.stem.replace("_", "-"), path.read_text(encoding="utf-8", errors="replace"), None))
    return out


# --------------------------------------------------------------------------
# bundles


@dataclass
class ReferenceItem:
    package: str
    texts: list[str]
    preamble: str
    score: float | None = None
    chunk_kinds: list[str] = field(default_factory=list)


@dataclass
class ReferenceBundle:
    strategy: str
    items: list[ReferenceItem] = field(default_factory=list)
    exclusions: frozenset[str] = frozenset()
    flags: list[str] = field(default_factory=list)

    @property
    def packages(self) -> list[str]:
        return [i.package for i in self.items]

    def to_dict(self) -> dict[str, Any]:
        return {"strategy": self.strategy, "packages": self.packages,
                "scores": [i.score for i in self.items],
                "exclusions": sorted(self.exclusions), "flags": list(self.flags)}


def excluded(candidate: str, target: str) -> bool:
    """Exact or substring name match (a candidate containing the target name)."""
    c, t = candidate.lower(), target.lower()
    return bool(t) and (c == t or t in c)


def _eligible(store: KnowledgeStore, target: RepoMetadata, build_system: str | None) -> tuple[list[str], frozenset[str]]:
    if not len(store):
        raise EmptyStoreError("the knowledge base is empty")
    names, skip = [], set()
    for name, node in store.nodes.items():
        if excluded(name, target.package_name):
            skip.add(name)
        elif build_system is None or build_system in node.build_systems:
            names.append(name)
    return names, frozenset(skip)


def none_bundle(store: KnowledgeStore | None, target: RepoMetadata) -> ReferenceBundle:
    skip = frozenset(n for n in (store.names() if store else ()) if excluded(n, target.package_name))
    return ReferenceBundle("none", [], skip)


# --------------------------------------------------------------------------
# affinity


@dataclass(frozen=True)
class AffinityScore:
    candidate: str
    score: float
    dep_overlap: int
    opt_overlap: int
    weights: tuple[float, float]


def target_sets(target: RepoMetadata) -> tuple[frozenset[str], frozenset[str]]:
    deps = frozenset(package_alias(h) for h in target.dependency_hints)
    opts = frozenset(normalize_identifier(o) for o in target.build_options)
    return deps, opts


def candidate_sets(node: PackageNode) -> tuple[frozenset[str], frozenset[str]]:
    return (frozenset(d.lower() for d in node.dependencies),
            frozenset(normalize_identifier(v) for v in node.variants))


def affinity(target: RepoMetadata, candidate: PackageNode,
             weights: tuple[float, float] = DEFAULT_AFFINITY_WEIGHTS) -> AffinityScore:
    w_d, w_b = weights
    if w_d < 0 or w_b < 0:
        raise ValueError("affinity weights must be nonnegative")
    d_t, b_t = target_sets(target)
    d_p, b_p = candidate_sets(candidate)
    dep, opt = len(d_t & d_p), len(b_t & b_p)
    return AffinityScore(candidate.name, w_d * dep + w_b * opt, dep, opt, (w_d, w_b))


def _rank_cmp(a: AffinityScore, b: AffinityScore) -> int:
    if not math.isclose(a.score, b.score, rel_tol=1e-12, abs_tol=1e-12):
        return -1 if a.score > b.score else 1
    return (a.candidate > b.candidate) - (a.candidate < b.candidate)


def rank_candidates(store: KnowledgeStore, target: RepoMetadata,
                    weights: tuple[float, float] = DEFAULT_AFFINITY_WEIGHTS,
                    same_build_system: bool = True) -> tuple[list[AffinityScore], frozenset[str]]:
    names, skip = _eligible(store, target, target.build_system if same_build_system else None)
    scores = [affinity(target, store[n], weights) for n in names]
    return sorted(scores, key=functools.cmp_to_key(_rank_cmp)), skip


def retrieve_similar(store: KnowledgeStore, target: RepoMetadata, count: int = 2,
                     weights: tuple[float, float] = DEFAULT_AFFINITY_WEIGHTS) -> ReferenceBundle:
    """Top ``count`` same-build-system packages by affinity; ties by name."""
    if count < 1:
        raise ValueError("count must be >= 1")
    ranked, skip = rank_candidates(store, target, weights)
    chosen = ranked[:count]
    items = [ReferenceItem(s.candidate, [store[s.candidate].recipe_text], role_preamble("similar"), s.score)
             for s in chosen]
    flags = ["insufficient_candidates"] if len(items) < count else []
    return ReferenceBundle("similar", items, skip, flags)


def retrieve_random(store: KnowledgeStore, target: RepoMetadata, count: int = 1,
                    same_build_system: bool = False, rng_seed: int = 0) -> ReferenceBundle:
    names, skip = _eligible(store, target, target.build_system if same_build_system else None)
    rng = random.Random(rng_seed)
    picked = rng.sample(names, min(count, len(names)))
    strategy = "random_same_build_system" if same_build_system else "random"
    items = [ReferenceItem(n, [store[n].recipe_text], role_preamble(strategy)) for n in picked]
    flags = ["insufficient_candidates"] if len(items) < count else []
    return ReferenceBundle(strategy, items, skip, flags)


def graph_query(target: RepoMetadata, weights: tuple[float, float] = DEFAULT_AFFINITY_WEIGHTS,
                limit: int = 2) -> str:
    """Equivalent query for an external graph database (Cypher dialect, APOC)."""
    d_t, b_t = target_sets(target)
    name = json.dumps(target.package_name)
    return "\n".join([
        "MATCH (p:Package)",
        f"WHERE p.name <> {name}",
        f"  AND NOT toLower(p.name) CONTAINS toLower({name})",
        f"  AND {json.dumps(target.build_system)} IN p.build_systems",
        "OPTIONAL MATCH (p)-[:DEPENDS_ON]->(d:Package)",
        "OPTIONAL MATCH (p)-[:HAS_VARIANT]->(v:Variant)",
        "WITH p,",
        f"     size(apoc.coll.intersection({json.dumps(sorted(d_t))}, collect(d.name))) AS dep_score,",
        f"     size(apoc.coll.intersection({json.dumps(sorted(b_t))}, collect(v.name))) AS var_score",
        "WITH p, dep_score, var_score,",
        f"     ({weights[0]} * dep_score + {weights[1]} * var_score) AS total_score",
        "ORDER BY total_score DESC, p.name ASC",
        f"LIMIT {int(limit)}",
        "RETURN p.name AS match_name, p.recipe AS recipe, total_score",
    ])


# --------------------------------------------------------------------------
# chunking


@dataclass
class RecipeChunk:
    package: str
    kind: str  # header | variants | dependencies | method_override
    text: str
    context: str  # the enclosing class line, kept apart so text stays a verbatim excerpt
    start_line: int
    end_line: int
    name: str = ""
    vector: Any = None

    @property
    def embedding_text(self) -> str:
        return f"{self.context}\n{self.text}"


def _statement_kind(stmt, lines: Sequence[str]) -> str:
    if stmt.kind == "method":
        return "method_override"
    if stmt.kind == "directive":
        return _CHUNK_KINDS.get(stmt.name, "header")
    if stmt.kind == "block":
        body = "\n".join(lines[stmt.line - 1: stmt.end_line])
        m = _DIRECTIVE_LINE_RE.search(body)
        return _CHUNK_KINDS[m.group(1)] if m else "header"
    return "header"


def chunk_recipe(recipe_text: str, package: str = "") -> list[RecipeChunk]:
    """Split a recipe into maximal runs of same-kind class-body statements.

    Every method is its own chunk.  A kind may appear in several chunks
    when other statements interrupt its run, which keeps each chunk a
    verbatim excerpt of the source.
    """
    recipe = parse_recipe(recipe_text)
    lines = recipe_text.split("\n")
    context = lines[recipe.class_line - 1].strip()
    chunks: list[RecipeChunk] = []
    run: list[Any] = []
    run_kind = ""

    def flush() -> None:
        if not run:
            return
        start, end = run[0].line, run[-1].end_line
        name = run[0].name if run_kind == "method_override" else ""
        chunks.append(RecipeChunk(package or recipe.class_name.lower(), run_kind,
                                  "\n".join(lines[start - 1: end]), context, start, end, name))

    for stmt in recipe.statements:
        kind = _statement_kind(stmt, lines)
        if run and (kind != run_kind or kind == "method_override"):
            flush()
            run = []
        run_kind = kind
        run.append(stmt)
    flush()
    return chunks


def feature_card(node: PackageNode) -> str:
    bases = ", ".join(node.recipe.base_classes) if node.recipe else ""
    return "\n".join([
        f"package: {node.name}",
        f"build systems: {', '.join(sorted(node.build_systems)) or 'unknown'}",
        f"base classes: {bases}",
        f"dependencies: {', '.join(sorted(node.dependencies))}",
        f"variants: {', '.join(sorted(node.variants))}",
    ])
