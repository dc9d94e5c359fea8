"""
Standard atmosphere and Mach-indexed aerodynamics of the interceptor airframe.

The atmosphere is the ISA troposphere with an isothermal layer above 11 km.
Aerodynamic coefficients come from a small Mach table that is interpolated
linearly and clamped to its end rows. All functions here are pure, so any
number of rollout workers can share them.
"""

import math
import os
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np

from errors import AeroDomainError, AtmosphereDomainError
from physics import tables

SEA_LEVEL_TEMPERATURE = 288.15  # K
SEA_LEVEL_DENSITY = 1.225  # kg/m^3
LAPSE_RATE = 0.0065  # K/m
GAS_CONSTANT = 287.05  # J/(kg K)
HEAT_RATIO = 1.4
# ISA standard gravity; the airframe dynamics use their own g (9.81 by default)
STANDARD_GRAVITY = 9.80665
TROPOPAUSE_ALTITUDE = 11000.0
ALTITUDE_MAX = 30000.0

_DENSITY_EXPONENT = STANDARD_GRAVITY / (LAPSE_RATE * GAS_CONSTANT) - 1.0
_TROPOPAUSE_TEMPERATURE = SEA_LEVEL_TEMPERATURE - LAPSE_RATE * TROPOPAUSE_ALTITUDE
_TROPOPAUSE_DENSITY = SEA_LEVEL_DENSITY * (_TROPOPAUSE_TEMPERATURE / SEA_LEVEL_TEMPERATURE) ** _DENSITY_EXPONENT
_ISOTHERMAL_SCALE_HEIGHT = GAS_CONSTANT * _TROPOPAUSE_TEMPERATURE / STANDARD_GRAVITY


@dataclass(frozen=True)
class AtmosphereSample:
    altitude: float
    air_density: float
    speed_of_sound: float


def standard_atmosphere(altitude: float) -> AtmosphereSample:
    """
    ISA properties at `altitude` (m).

    Below 11 km the temperature falls linearly; above it the temperature is
    held at the tropopause value and density decays exponentially.
    """
    if not (0.0 <= altitude <= ALTITUDE_MAX):
        raise AtmosphereDomainError(f"altitude {altitude} m outside [0, {ALTITUDE_MAX}] m")

    if altitude <= TROPOPAUSE_ALTITUDE:
        temperature = SEA_LEVEL_TEMPERATURE - LAPSE_RATE * altitude
        density = SEA_LEVEL_DENSITY * (temperature / SEA_LEVEL_TEMPERATURE) ** _DENSITY_EXPONENT
    else:
        temperature = _TROPOPAUSE_TEMPERATURE
        density = _TROPOPAUSE_DENSITY * math.exp(-(altitude - TROPOPAUSE_ALTITUDE) / _ISOTHERMAL_SCALE_HEIGHT)

    return AtmosphereSample(
        altitude=altitude,
        air_density=density,
        speed_of_sound=math.sqrt(HEAT_RATIO * GAS_CONSTANT * temperature),
    )


@dataclass(frozen=True)
class Airframe:
    mass: float = tables.MASS_KG
    ref_area: float = tables.REF_AREA_M2
    alpha_max: float = math.radians(tables.ALPHA_MAX_DEG)
    gravity: float = tables.GRAVITY

    def __post_init__(self):
        for name in ("mass", "ref_area", "alpha_max", "gravity"):
            if not getattr(self, name) > 0.0:
                raise AeroDomainError(f"airframe.{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class AeroTable:
    """Rows of (mach, cl_alpha, cd0, cd_alpha2), strictly ascending in Mach."""

    rows: Tuple[Tuple[float, float, float, float], ...]
    _columns: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.rows)
        if len(rows) < 2:
            raise AeroDomainError("aero table needs at least 2 rows")
        if any(len(row) != 4 for row in rows):
            raise AeroDomainError("aero table rows must have 4 columns")
        columns = np.array(rows, dtype=np.float64).T
        if np.any(np.diff(columns[0]) <= 0.0):
            raise AeroDomainError("aero table Mach column must be strictly ascending")
        if np.any(columns[1:] <= 0.0):
            raise AeroDomainError("aero coefficients must be positive")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "_columns", columns)

    @classmethod
    def default(cls) -> "AeroTable":
        return cls(tables.AERO_TABLE_ROWS)

    @classmethod
    def from_file(cls, path: Union[str, os.PathLike]) -> "AeroTable":
        """
        Load a plain-text table: one row per Mach, four whitespace-separated
        columns (mach cl_alpha cd0 cd_alpha2), comment lines start with '#'.
        """
        rows = []
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    rows.append(tuple(float(tok) for tok in line.split()))
                except ValueError as exc:
                    raise AeroDomainError(f"{path}:{lineno}: {exc}") from exc
        return cls(tuple(rows))

    @property
    def machs(self) -> np.ndarray:
        return self._columns[0]


def interp_coeffs(table: AeroTable, mach: float) -> Tuple[float, float, float]:
    """Linear interpolation in Mach, clamped to the first/last rows."""
    cols = table._columns
    return (
        float(np.interp(mach, cols[0], cols[1])),
        float(np.interp(mach, cols[0], cols[2])),
        float(np.interp(mach, cols[0], cols[3])),
    )


@dataclass(frozen=True)
class _AeroPoint:
    dynamic_pressure: float
    cl_alpha: float
    cd0: float
    cd_alpha2: float


def _aero_point(speed: float, altitude: float, table: AeroTable) -> _AeroPoint:
    # Flight paths can briefly leave the model range (last sub-step before
    # ground contact, lofted arcs from the highest launch points).
    air = standard_atmosphere(min(max(altitude, 0.0), ALTITUDE_MAX))
    cl_alpha, cd0, cd_alpha2 = interp_coeffs(table, speed / air.speed_of_sound)
    return _AeroPoint(0.5 * air.air_density * speed * speed, cl_alpha, cd0, cd_alpha2)


def _alpha_at(point: _AeroPoint, a_cmd: float, airframe: Airframe) -> float:
    alpha = airframe.mass * a_cmd / (point.cl_alpha * point.dynamic_pressure * airframe.ref_area)
    return min(max(alpha, -airframe.alpha_max), airframe.alpha_max)


def _forces_at(point: _AeroPoint, alpha: float, airframe: Airframe) -> Tuple[float, float, float]:
    qs = point.dynamic_pressure * airframe.ref_area
    lift = point.cl_alpha * alpha * qs
    drag = (point.cd0 + point.cd_alpha2 * alpha * alpha) * qs
    return lift, drag, airframe.mass * airframe.gravity


def forces(
    state_speed: float,
    altitude: float,
    alpha: float,
    airframe: Airframe,
    table: AeroTable,
) -> Tuple[float, float, float]:
    """
    Lift, drag and weight (N) for the given speed, altitude and AoA.

    Raises:
        AeroDomainError: speed not positive or |alpha| beyond airframe.alpha_max.
    """
    if not state_speed > 0.0:
        raise AeroDomainError(f"speed must be > 0, got {state_speed}")
    if abs(alpha) > airframe.alpha_max * (1.0 + 1e-12):
        raise AeroDomainError(f"|alpha| = {abs(alpha)} rad exceeds limit {airframe.alpha_max} rad")
    return _forces_at(_aero_point(state_speed, altitude, table), alpha, airframe)


def alpha_from_accel(
    a_cmd: float,
    speed: float,
    altitude: float,
    airframe: Airframe,
    table: AeroTable,
) -> float:
    """AoA that produces lateral acceleration `a_cmd`, saturated at +/- alpha_max."""
    if not speed > 0.0:
        raise AeroDomainError(f"speed must be > 0, got {speed}")
    return _alpha_at(_aero_point(speed, altitude, table), a_cmd, airframe)


def flight_forces(
    speed: float,
    altitude: float,
    a_cmd: float,
    airframe: Airframe,
    table: AeroTable,
) -> Tuple[float, float, float]:
    """alpha_from_accel followed by forces, sharing one atmosphere lookup."""
    point = _aero_point(speed, altitude, table)
    return _forces_at(point, _alpha_at(point, a_cmd, airframe), airframe)
