"""Module for common constant definitions.

This module contains constants used across the airfoil inverse design utilities.
"""

# Airfoil surface discretisation
AIRFOIL_POINT_COUNT = 130
SURFACE_POINT_COUNT = 65
CST_ORDER = 6

# CP plotting domain used by the SDF encoding
CP_DOMAIN_X = (0.0, 1.0)
CP_DOMAIN_CP = (-1.5, 1.15)

# Pressure feature extraction
SUCTION_WINDOW = 0.15
SLOPE_THRESHOLD = 0.1
SMOOTHING_WINDOW = 5
FEATURE_NAMES = ("f_sp", "f_sw", "f_ss", "f_pg", "f_lm", "f_area")
FEATURE_COUNT = len(FEATURE_NAMES)

# Reference flow condition (RAE2822 case 9)
DEFAULT_MACH = 0.734
DEFAULT_ALPHA = 2.79
DEFAULT_REYNOLDS = 6.5e6
DEFAULT_GAMMA = 1.4

# Mapping model
Y_SCALE = 1000.0

# Optimizer
DEFAULT_PENALTY = 50.0
