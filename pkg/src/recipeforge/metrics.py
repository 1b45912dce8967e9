"""Structural similarity between a generated recipe and a reference recipe.

S_v compares configuration-argument key sets; M scores a pair of
same-name dependencies; S_d averages each original dependency's best M
over the generated list.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .errors import NameMismatchError
from .recipe import ConfigKeySet, Dependency, Recipe, extract_config_keys, extract_dependencies, normalize_spec


@dataclass(frozen=True)
class MatchWeights:
    alpha: float = 0.6
    beta: float = 0.2
    gamma: float = 0.1
    lam: float = 0.1

    def __post_init__(self) -> None:
        values = (self.alpha, self.beta, self.gamma, self.lam)
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise ValueError(f"match weights must be finite and nonnegative: {values}")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError(f"match weights must sum to 1, got {sum(values)!r}")


DEFAULT_WEIGHTS = MatchWeights()


@dataclass
class DependencyMatch:
    original: str
    best: str | None
    score: float
    ties: int = 0  # additional same-score candidates not recorded


@dataclass
class MetricReport:
    variant_score: float | None
    dependency_score: float
    per_dependency: list[DependencyMatch] = field(default_factory=list)
    excluded_variant_sample: bool = False
    # when-block directives are counted with an empty condition
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        return cls(
            variant_score=data.get("variant_score"),
            dependency_score=data["dependency_score"],
            per_dependency=[DependencyMatch(**d) for d in data.get("per_dependency", [])],
            excluded_variant_sample=data.get("excluded_variant_sample", False),
            notes=list(data.get("notes", [])),
        )


def _keys(value: ConfigKeySet | Iterable[str]) -> frozenset[str]:
    return value.keys if isinstance(value, ConfigKeySet) else frozenset(value)


def variant_similarity(ground_truth: ConfigKeySet | Iterable[str],
                       generated: ConfigKeySet | Iterable[str]) -> float | None:
    """|A ∩ B| / |A|, or None when the ground truth has no keys."""
    a, b = _keys(ground_truth), _keys(generated)
    if not a:
        return None
    return len(a & b) / len(a)


def _delta(x: str | None, y: str | None) -> int:
    return int(normalize_spec(x) == normalize_spec(y))


def dependency_match(original: Dependency, candidate: Dependency, w: MatchWeights = DEFAULT_WEIGHTS) -> float:
    if original.name != candidate.name:
        raise NameMismatchError(f"cannot match {original.name!r} against {candidate.name!r}")
    type_overlap = len(original.types & candidate.types) / max(len(original.types), 1)
    return (w.alpha + w.beta * type_overlap
            + w.gamma * _delta(original.spec, candidate.spec)
            + w.lam * _delta(original.condition, candidate.condition))


def dependency_similarity(d_a: Sequence[Dependency], d_b: Sequence[Dependency],
                          w: MatchWeights = DEFAULT_WEIGHTS) -> tuple[float, list[DependencyMatch]]:
    """Mean best-match score of the originals; non-exclusive matching."""
    by_name: dict[str, list[Dependency]] = {}
    for cand in d_b:
        by_name.setdefault(cand.name, []).append(cand)
    total = 0.0
    detail: list[DependencyMatch] = []
    for orig in d_a:
        best, best_score, ties = None, 0.0, 0
        for cand in by_name.get(orig.name, ()):
            m = dependency_match(orig, cand, w)
            if best is None or m > best_score:
                best, best_score, ties = cand, m, 0
            elif m == best_score:
                ties += 1
        total += best_score
        detail.append(DependencyMatch(str(orig), str(best) if best else None, best_score, ties))
    return total / max(len(d_a), 1), detail


def score_recipes(ground_truth: Recipe, generated: Recipe, w: MatchWeights = DEFAULT_WEIGHTS,
                  class_inherent: Iterable[str] = ()) -> MetricReport:
    inherent = tuple(class_inherent)
    sv = variant_similarity(extract_config_keys(ground_truth), extract_config_keys(generated))
    sd, detail = dependency_similarity(extract_dependencies(ground_truth, inherent),
                                       extract_dependencies(generated, inherent), w)
    notes = []
    if any(d.kind == "when_context" for r in (ground_truth, generated) for d in r.diagnostics):
        notes.append("directives inside when() blocks counted with an empty condition")
    return MetricReport(sv, sd, detail, sv is None, notes)
