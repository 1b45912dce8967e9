"""Exception types shared across the toolkit."""

from __future__ import annotations


class RecipeForgeError(Exception):
    """Base class for all toolkit errors."""


class ParseError(RecipeForgeError):
    """Recipe text is not valid in the recipe dialect."""

    def __init__(self, message: str, line: int = 0):
        self.message = message
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class NoBuildSystemError(RecipeForgeError):
    pass


class DuplicateNameError(RecipeForgeError):
    pass


class EmptyStoreError(RecipeForgeError):
    pass


class GatewayError(RecipeForgeError):
    """Transport, timeout or HTTP failure talking to a model endpoint."""


class DimensionMismatch(GatewayError):
    pass


class BudgetExceeded(RecipeForgeError):
    pass


class SandboxError(RecipeForgeError):
    """The sandbox runtime itself failed (not the recipe under test)."""


class NameMismatchError(RecipeForgeError, ValueError):
    pass


class AbortError(RecipeForgeError):
    pass
