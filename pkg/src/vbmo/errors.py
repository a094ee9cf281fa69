"""Exception hierarchy.

Every error carries the module and pipeline stage that raised it so the
command line front end can report ``module:stage`` without parsing messages.
"""
from __future__ import annotations


class VbmoError(Exception):
    """Base class for all library errors."""

    module = "vbmo"

    def __init__(self, message: str = "", *, stage: str = "", module: str | None = None):
        super().__init__(message)
        self.stage = stage
        if module is not None:
            self.module = module

    def where(self) -> str:
        return f"{self.module}:{self.stage}" if self.stage else self.module


# geometry
class OutOfReach(VbmoError):
    module = "geometry"


class OutOfChart(VbmoError):
    module = "geometry"


class SingularJacobian(VbmoError):
    module = "geometry"


class CoverageGap(VbmoError):
    module = "geometry"


class ConfigError(VbmoError):
    module = "config"


# fields
class DegenerateGrid(VbmoError):
    module = "fields"


class GridMismatch(VbmoError):
    module = "fields"


# extension
class SupportViolation(VbmoError):
    module = "extension"


# singular
class SingularPoint(VbmoError):
    module = "singular"


class SupportLeak(VbmoError):
    module = "singular"


# freezing
class ConvergenceFailure(VbmoError):
    module = "freezing"


class TruncationWarning(UserWarning):
    """Neumann series hit its term cap before reaching the tolerance."""


# neumann
class QuadratureDegenerate(VbmoError):
    module = "neumann"


class CompatibilityViolation(VbmoError):
    module = "neumann"


class SolverDivergence(VbmoError):
    module = "neumann"


class ProbeOutsideDomain(VbmoError):
    module = "neumann"
