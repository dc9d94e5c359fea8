"""Physics package exports: atmosphere/aero model and engagement dynamics."""

from .atmosphere import (
    AeroTable,
    Airframe,
    AtmosphereSample,
    alpha_from_accel,
    forces,
    interp_coeffs,
    standard_atmosphere,
)
from .dynamics import (
    Engagement,
    GuidanceCommand,
    Outcome,
    SimSettings,
    TerminationRecord,
    VehicleState,
    los_geometry,
    png_baseline,
    rollout,
    step,
)
