"""
Errors
======
Exception hierarchy shared by the wpcn package.

Infeasibility and audit violations are reported as data (statuses and
slacks), never raised.
"""


class WpcnError(Exception):
    """Base class for all wpcn errors."""


class DomainError(WpcnError, ValueError):
    """An argument lies outside the domain of a physical model or operation."""


class DimensionError(WpcnError, ValueError):
    """Matrix or vector shapes do not match the scenario dimensions."""


class InfeasibleTargetError(WpcnError, ValueError):
    """A requested target cannot be reached (e.g. harvested power >= saturation)."""


class ConfigError(WpcnError, ValueError):
    """Invalid scenario file, override or experiment description."""


class SolverFailure(WpcnError, RuntimeError):
    """The conic backend failed numerically; carries backend diagnostics."""

    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message)
        self.diagnostics = diagnostics
