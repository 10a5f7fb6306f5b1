"""Shared exception taxonomy for the laboratory.

Every failure mode that operations promise to detect maps onto one of these
classes, so callers (and the CLI) can distinguish bad configuration from
numerical breakdown.
"""

from __future__ import annotations


class LabError(Exception):
    """Base class for all laboratory errors."""


class ConfigError(LabError):
    """Malformed experiment configuration (carries the offending field path)."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")


class GeometryError(LabError):
    """Region geometry violates the layout contract."""


class ChainError(LabError):
    """Ball-chain construction failed or an invariant is violated."""


class PreconditionError(LabError):
    """A mathematical precondition of an operation does not hold."""


class MetricError(LabError):
    """Coefficient field violates admissibility (ellipticity / exterior identity)."""


class SolverError(LabError):
    """Linear solve failed to converge; carries the final residual norm."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


class TraceExtractionError(LabError):
    """Weighted Neumann trace extraction is ill-conditioned or impossible."""


class DomainError(LabError):
    """Requested evaluation points fall outside the valid domain."""


class InputError(LabError):
    """Invalid field or vector input to an operation."""


class UnderflowError(LabError):
    """Quantity fell below the floor where log-fits are meaningful."""


class CalibrationError(LabError):
    """Symbol calibration failed (fit residual too large)."""


class EigenvalueCollisionError(LabError):
    """Zero (or near-zero) Dirichlet eigenvalue makes an operator singular."""


class AdmissibilityError(LabError):
    """Ball triple or norm sequence is outside the admissible regime."""


class ConstructionError(LabError):
    """Root-finding for a constructed object failed to bracket/converge."""


class NumericError(LabError):
    """Generic numerical failure (NaN/Inf, impossible value)."""


class ListingError(LabError):
    """Expected artifact files are missing; carries the listing."""

    def __init__(self, message: str, missing: list[str] | None = None):
        self.missing = missing or []
        super().__init__(message)


class FitWarning(UserWarning):
    """A least-squares fit is unreliable (degenerate abscissae or low R^2)."""
