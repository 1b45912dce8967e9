"""Prompt assembly for generation, repair and distillation.

The layouts live in ``templates/`` as Jinja files so wording can be changed
without touching code; ``PromptConfig.template_dir`` points elsewhere to
experiment with alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Any

import jinja2

from ._text import truncate
from .errors import BudgetExceeded

if TYPE_CHECKING:
    from .knowledge import ReferenceBundle
    from .repo import DistilledMetadata, RepoMetadata

SIMILAR_PREAMBLE = ('the recipe was found to be one of the most "similar" to the target package, '
                    "based on the supplied metadata")
RANDOM_PREAMBLE = "this recipe was randomly selected. it will provide useful heuristics to you about spack packages."

STRATEGY_PREAMBLES = {
    "similar": SIMILAR_PREAMBLE,
    "embedding": SIMILAR_PREAMBLE,
    "random": RANDOM_PREAMBLE,
    "random_same_build_system": RANDOM_PREAMBLE,
}


def role_preamble(strategy: str) -> str:
    try:
        return STRATEGY_PREAMBLES[strategy]
    except KeyError:
        raise ValueError(f"no reference preamble for strategy {strategy!r}") from None


@dataclass(frozen=True)
class PromptConfig:
    context_chars: int = 120_000
    metadata_chars: int = 8_000
    condensed_fraction: float = 0.25
    log_chars: int = 8_000
    min_log_chars: int = 500
    template_dir: str | None = None


@dataclass(frozen=True)
class Reference:
    preamble: str
    recipe: str
    package: str = ""


@dataclass
class PromptSpec:
    mode: str  # generate | repair | distill
    preamble: str = ""
    package_name: str = ""
    build_system: str = ""
    feature_hints: tuple[str, ...] = ()
    metadata_text: str = ""
    version_block: str = ""
    tree_block: str | None = None
    references: list[Reference] = field(default_factory=list)
    # repair-only sections
    original: str = ""
    previous_recipe: str = ""
    failure_class: str = ""
    error_log: str = ""
    audit_findings: list[str] | None = None
    # distill-only
    fragments: list[tuple[str, str]] = field(default_factory=list)
    budget: int = 0
    notes: list[str] = field(default_factory=list)
    system: str = ""
    template_dir: str | None = None

    def render(self) -> str:
        env = _environment(self.template_dir)
        refs = [{"preamble": r.preamble, "recipe": r.recipe} for r in self.references]
        if self.mode == "generate":
            return env.get_template("generate.j2").render(
                preamble=self.preamble, pkg_name=self.package_name, build_sys=self.build_system,
                features=", ".join(self.feature_hints) or "none", cmake_distilled=self.metadata_text,
                version=self.version_block, tree=self.tree_block, refs=refs, notes=self.notes)
        if self.mode == "repair":
            return env.get_template("repair.j2").render(
                original=self.original, previous_recipe=self.previous_recipe, failure_class=self.failure_class,
                error_log=self.error_log, audit=self.audit_findings, refs=refs, notes=self.notes)
        if self.mode == "distill":
            return env.get_template("distill.j2").render(
                pkg_name=self.package_name, fragments=self.fragments, budget=self.budget)
        raise ValueError(f"unknown prompt mode {self.mode!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"mode": self.mode, "text": self.render(), "notes": list(self.notes)}


def _template_root(template_dir: str | None) -> str:
    if template_dir:
        return template_dir
    return str(resources.files("recipeforge").joinpath("templates"))


@lru_cache(maxsize=8)
def _environment(template_dir: str | None) -> jinja2.Environment:
    return jinja2.Environment(
        loader=jinja2.FileSystemLoader(_template_root(template_dir)),
        undefined=jinja2.StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
        autoescape=False,
    )


def _asset(name: str, template_dir: str | None) -> str:
    return Path(_template_root(template_dir), name).read_text().rstrip("\n")


def version_block(meta: "RepoMetadata") -> str:
    v = meta.version_info
    if v is None:
        return "No version information was provided."
    lines = [f"version: {v.version_string}"]
    if v.source_url:
        lines.append(f"url: {v.source_url}")
    if v.checksum:
        lines.append(f"sha256: {v.checksum}")
    return "\n".join(lines)


def raw_metadata_text(meta: "RepoMetadata") -> str:
    return "\n".join(f"# {origin}\n{text}" for origin, text in meta.raw_fragments)


def references_from_bundle(refs: "ReferenceBundle | None") -> list[Reference]:
    if refs is None or refs.strategy == "none":
        return []
    return [Reference(item.preamble, "\n\n".join(item.texts), item.package) for item in refs.items]


def assemble_prompt(meta: "RepoMetadata", refs: "ReferenceBundle | None" = None, mode: str = "generate",
                    condensed: bool = False, distilled: "DistilledMetadata | None" = None,
                    config: PromptConfig = PromptConfig()) -> PromptSpec:
    """Build the generation prompt.

    ``distilled`` selects the distilled metadata text; without it the raw
    CMake fragments are used.  ``condensed`` drops the tree and the
    references and keeps only a fraction of the metadata budget (used as
    the task recap inside repair prompts).
    """
    if mode != "generate":
        raise ValueError("assemble_prompt builds generate prompts; use the repair module for repairs")
    if not meta.package_name:
        raise ValueError("metadata has no package name")
    metadata = distilled.text if distilled is not None else raw_metadata_text(meta)
    meta_budget = config.metadata_chars
    if condensed:
        meta_budget = max(1, int(config.metadata_chars * config.condensed_fraction))
    spec = PromptSpec(
        mode="generate",
        preamble=_asset("preamble.txt", config.template_dir),
        package_name=meta.package_name,
        build_system=meta.build_system,
        feature_hints=tuple(sorted(meta.feature_hints)),
        metadata_text=truncate(metadata, meta_budget),
        version_block=version_block(meta),
        tree_block=None if condensed else meta.tree.render(),
        references=[] if condensed else references_from_bundle(refs),
        system=_asset("system.txt", config.template_dir),
        template_dir=config.template_dir,
    )
    return fit_generate(spec, config.context_chars)


def fit_generate(spec: PromptSpec, limit: int) -> PromptSpec:
    """Drop the tree, then references (last first), then shrink metadata."""
    if len(spec.render()) <= limit:
        return spec
    mandatory = replace(spec, metadata_text="", tree_block=None, references=[],
                        notes=["tree omitted: context budget", "references omitted: context budget",
                               "metadata truncated: context budget"])
    if len(mandatory.render()) > limit:
        raise BudgetExceeded(f"mandatory prompt blocks need {len(mandatory.render())} characters, limit is {limit}")
    if spec.tree_block is not None:
        spec = replace(spec, tree_block=None, notes=spec.notes + ["tree omitted: context budget"])
    refs = list(spec.references)
    dropped = False
    while refs and len(spec.render()) > limit:
        refs.pop()
        dropped = True
        spec = replace(spec, references=list(refs))
    if dropped:
        spec = replace(spec, notes=spec.notes + ["references omitted: context budget"])
    excess = len(spec.render()) - limit
    if excess > 0:
        note = spec.notes + ["metadata truncated: context budget"]
        spec = replace(spec, notes=note)
        excess = len(spec.render()) - limit
        keep = max(0, len(spec.metadata_text) - excess - 64)
        spec = replace(spec, metadata_text=truncate(spec.metadata_text, keep) if keep else "")
    return spec


def distill_prompt(meta: "RepoMetadata", budget: int = 8000, config: PromptConfig = PromptConfig()) -> PromptSpec:
    return PromptSpec(mode="distill", package_name=meta.package_name, fragments=list(meta.raw_fragments),
                      budget=budget, system=_asset("system.txt", config.template_dir),
                      template_dir=config.template_dir)
