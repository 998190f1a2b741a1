"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters: ConfigError -> 2, ShapeError/DataFormatError -> 3,
DivergenceError/GradCheckError -> 4.
"""


class TrnnError(Exception):
    """Base class for all package errors."""


class ShapeError(TrnnError):
    """Operands have incompatible shapes, orders, or extents."""


class ConfigError(TrnnError):
    """Invalid or inconsistent user configuration."""


class DataFormatError(TrnnError):
    """Corrupt, truncated, or version-mismatched on-disk data."""


class DivergenceError(TrnnError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")


class GradCheckError(TrnnError):
    """Analytic gradients disagree with finite differences beyond tolerance."""
