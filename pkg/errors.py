"""
Exception hierarchy for the guidance toolkit.

Every failure the toolkit raises on purpose derives from GuidanceError so the
CLI can turn it into a one-line diagnostic and a nonzero exit status.
"""

from typing import Iterable, List


class GuidanceError(Exception):
    """Base class for all toolkit errors."""


class AtmosphereDomainError(GuidanceError):
    """Altitude outside the range the atmosphere model covers."""


class AeroDomainError(GuidanceError):
    """Aerodynamic precondition violated (non-positive speed, AoA over limit, bad table)."""


class SingularGeometryError(GuidanceError):
    """Missile and target coincide, so the LOS angle is undefined."""


class StallError(GuidanceError):
    """Speed dropped to zero or below during integration."""


class ShapeError(GuidanceError):
    """Input or gradient shape does not match the network."""


class NonFiniteError(GuidanceError):
    """A loss, gradient or parameter became NaN/Inf."""


class ModelFormatError(GuidanceError):
    """Weight file is corrupt or written by an incompatible format version."""


class DatasetError(GuidanceError):
    """Dataset cannot be built or used (no Hit trajectories, too few samples, ...)."""


class ConfigurationError(GuidanceError):
    """Missing artifact or unusable configuration."""


class ConfigSchemaError(ConfigurationError):
    """Configuration file does not match the schema; carries every offending key."""

    def __init__(self, offending: Iterable[str]):
        self.offending: List[str] = list(offending)
        super().__init__("invalid configuration keys: " + ", ".join(self.offending))
