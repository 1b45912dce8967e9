"""Generate, validate and repair Spack package recipes for CMake projects."""

from .errors import (AbortError, BudgetExceeded, DimensionMismatch, DuplicateNameError, EmptyStoreError,
                     GatewayError, NameMismatchError, NoBuildSystemError, ParseError, RecipeForgeError,
                     SandboxError)
from .metrics import MatchWeights, MetricReport, dependency_similarity, score_recipes, variant_similarity
from .recipe import Dependency, Recipe, parse_recipe, render_recipe

__version__ = "0.1.0"

__all__ = [
    "AbortError", "BudgetExceeded", "Dependency", "DimensionMismatch", "DuplicateNameError", "EmptyStoreError",
    "GatewayError", "MatchWeights", "MetricReport", "NameMismatchError", "NoBuildSystemError", "ParseError",
    "Recipe", "RecipeForgeError", "SandboxError", "dependency_similarity", "parse_recipe", "render_recipe",
    "score_recipes", "variant_similarity",
]
