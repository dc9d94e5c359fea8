"""
Reference data for the interceptor airframe and the engagement scenarios.

These are plain constants that the simulator, the config defaults and the
experiments refer to. Angles are in degrees here (as they appear in config
files); code converts to radians where it uses them.
"""

# Mach, C_L^alpha (1/rad), C_D0, C_D^alpha^2 (1/rad^2)
AERO_TABLE_ROWS = (
    (0.4, 39.056, 0.4604, 39.072),
    (0.6, 40.801, 0.4682, 39.735),
    (0.8, 41.372, 0.4635, 39.242),
    (0.9, 42.468, 0.4776, 40.531),
)

MASS_KG = 200.0
REF_AREA_M2 = 0.0572556
ALPHA_MAX_DEG = 15.0
GRAVITY = 9.81

# Initial-condition intervals (x0, y0 in km; v0 in m/s; theta0 in deg)
X0_KM = (-30.0, -10.0)
Y0_KM = (10.0, 30.0)
V0_MPS = (200.0, 300.0)
THETA0_DEG = (0.0, 45.0)
TARGET_KM = (0.0, 0.0)

FIXED_SCENARIO = {"x0_km": -20.0, "y0_km": 20.0, "v0": 200.0, "theta0_deg": 0.0}

DESIRED_TIME_SWEEP = (100.0, 120.0, 140.0, 160.0, 180.0, 200.0)
DESIRED_TIME_RATIO_BAND = (1.1, 1.2)

# Run sizes: desk profile finishes in minutes, full profile is the complete study
DESK_SCALE = {"trajectories": 100, "dnn_steps": 20000, "episodes": 200, "mc_runs": 50}
FULL_SCALE = {"trajectories": 1000, "dnn_steps": 100000, "episodes": 500, "mc_runs": 100}
