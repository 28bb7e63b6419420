"""
Shared constants for the Winter δ-shell laboratory.

Defaults for every run knob live here so that the CLI, the config loader and
the services agree on them.
"""

import math

ARTIFACT_NAME = "winter-nls-lab"
ARTIFACT_VERSION = "1.0.0"

# Model defaults (reference numerical experiment)
DEFAULT_A = 1.0
DEFAULT_ALPHA = -4.0
DEFAULT_ETA = 0.0
DEFAULT_SIGMA = 1.0

# Special functions
LAMBERT_MAX_ITER = 100
LANDEN_MAX_ITER = 16
HYPERBOLIC_SWITCH = 1.0e-10  # p > 1 - HYPERBOLIC_SWITCH uses tanh/sech forms
INV_E = math.exp(-1.0)

# Linear module
KERNEL_ACCURACY_LIMIT = 1.0e-5  # quadrature error estimate allowed in the kernel remainder
KERNEL_SPLIT_FACTOR = 3.0  # head interval reaches k = KERNEL_SPLIT_FACTOR · phase / t
THRESHOLD_TOL = 1.0e-12  # |aα + 1| below this is the threshold case
DISPERSIVE_TIMES = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0)
DISPERSIVE_CENTER = 3.0
DISPERSIVE_WIDTH = 0.5

# Stationary module
P_POINTS = 240
P_NEAR_ONE_DECADES = (2.0, 8.0)
P_NEAR_ONE_POINTS = 40
P_EDGE_GAP = 2.0e-3
LAMBDA_MAX_FACTOR = 20.0  # λ′_max = LAMBDA_MAX_FACTOR / a
LAMBDA_SCAN_MIN_POINTS = 1500
LAMBDA_MAX_DOUBLINGS = 3
ROOT_TOL = 1.0e-12
ROOT_RESIDUAL_REL = 1.0e-10  # |H| relative to the size of its terms
ODE_RESIDUAL_TOL = 1.0e-6
JUMP_RESIDUAL_TOL = 1.0e-8
FD_STEP_P = 1.0e-6  # relative step of ∂Ĥ/∂p
FD_AGREEMENT_TOL = 1.0e-6  # allowed gap between the h and h/2 quotients
FD_ROUNDING_FACTOR = 10.0
FOLD_P_MARGIN = 3.0e-3  # fold search keeps this far from the ends of the p-range
NEWTON_MAX_ITER = 40
BIFURCATION_TOL = 1.0e-10
BIFURCATION_GRID = (200, 400)  # coarse (p, λ′) grid for fold seeds
DEDUP_DISTANCE = 1.0e-6
BRANCH_GAP_FACTOR = 8.0
SLOPE_MARGINAL_TOL = 1.0e-8
SLOPE_NOTE = "conjectural: assumes the spectral assumptions of the slope criterion"
FIGURE1_ETA_RANGE = (-110.0, 0.0)

# Dynamics module
DEFAULT_L_MARGIN = 40.0  # L = a + DEFAULT_L_MARGIN
DEFAULT_DX = 0.01
DEFAULT_DT = 1.0e-3
DEFAULT_T_FINAL = 1.0
DT_MIN = 1.0e-12
SUP_GROWTH_LIMIT = 1.10
H1_BLOWUP = 1.0e6
RESOLUTION_FACTOR = 0.25  # H¹ above RESOLUTION_FACTOR / dx is not resolved by the grid
CONCENTRATION_GROWTH = 4.0  # focusing runs halt once H¹ is also this many times its initial value

REFLECTION_FRACTION = 0.9
REFLECTION_LEVEL = 1.0e-6
OBSERVER_STRIDE = 10
PROBE_T_FINAL = 1.0

BLOWUP_RULE_DESCRIPTIONS = {
    "Thm2-i": "repulsive-nonlinearity",
    "Thm2-ii": "subcritical-power",
    "Thm2-iii-indeterminate": "critical-power-indeterminate",
    "Thm2-iv-indeterminate": "supercritical-indeterminate",
    "Thm3-conditional": "negative-energy-supercritical",
    "numerical-blowup-detected": "numerical-blowup-detected",
}

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BLOWUP = 4

# Output formats
CSV_FLOAT_FORMAT = "%.17g"

DIAGNOSTICS_COLUMNS = [
    "t", "norm_sq", "energy", "I_q", "I_q_dot", "I_q_ddot",
    "sup_norm", "h1_norm", "boundary_term_T",
]
STATIONARY_COLUMNS = [
    "regime", "ell", "p", "lambda_prime", "Omega", "mu_sq", "eta",
    "slope", "classification",
]
FIGURE1_COLUMNS = ["branch_label", "eta", "Omega"]
DISPERSIVE_COLUMNS = ["t", "sup_norm", "sqrt_t_times_sup"]
SNAPSHOT_COLUMNS = ["x", "re_psi", "im_psi"]

ENV_PREFIX = "WINTER_NLS_"
THREADS_ENV = "WINTER_NLS_THREADS"
LOG_LEVEL_ENV = "WINTER_NLS_LOG_LEVEL"
