"""Constants for gbdsde_lab."""

from __future__ import annotations

from logging import Logger, getLogger

LOGGER: Logger = getLogger(__package__)

DOMAIN = "gbdsde_lab"

CONF_MEASURE = "measure"
CONF_SIZE = "size"
CONF_INTENSITY = "intensity"
CONF_GRID = "grid"
CONF_HORIZON = "horizon"
CONF_STEPS = "steps"
CONF_CLOCK = "clock"
CONF_PROFILE = "profile"
CONF_KAPPA = "kappa"
CONF_POWER = "power"
CONF_TABLE = "table"
CONF_SEED = "seed"
CONF_BROWNIAN_PATHS = "brownian_paths"
CONF_TOLERANCES = "tolerances"
CONF_SIMULATE = "simulate"
CONF_SOLVE = "solve"
CONF_LADDER = "ladder"
CONF_COMPARE = "compare"
CONF_PATHS = "paths"
CONF_BRACKETS = "brackets"
CONF_WRITE_CSV = "write_csv"
CONF_DRIVER = "driver"
CONF_DRIVER_1 = "driver1"
CONF_DRIVER_2 = "driver2"
CONF_TERMINAL = "terminal"
CONF_TERMINAL_1 = "terminal1"
CONF_TERMINAL_2 = "terminal2"
CONF_NAME = "name"
CONF_PARAMS = "params"
CONF_PICARD = "picard"
CONF_SWEEP = "sweep"
CONF_RUNGS = "rungs"
CONF_DIRECTION = "direction"
CONF_STOP_TOL = "stop_tol"
CONF_BOX_RADIUS = "box_radius"
CONF_GRID_SPACING = "grid_spacing"
CONF_MAX_RADIUS = "max_radius"
CONF_WEIGHTS = "weights"
CONF_MU = "mu"
CONF_LAMBDA = "lambda"
CONF_FIXED_POINT_TOL = "fixed_point_tol"
CONF_MAX_ITERATIONS = "max_iterations"
CONF_PICARD_TOL = "picard_tol"
CONF_PICARD_MAX_ITERATIONS = "picard_max_iterations"
CONF_COND_MAX = "cond_max"
CONF_MAX_NODES = "max_nodes"
CONF_ORDER_TOL = "order_tol"

PROFILE_LINEAR = "linear"
PROFILE_POWER = "power"
PROFILE_TABLE = "table"
CLOCK_PROFILES = (PROFILE_LINEAR, PROFILE_POWER, PROFILE_TABLE)

DIRECTION_MIN = "min"
DIRECTION_MAX = "max"
DIRECTION_BOTH = "both"

GAMMA_EXPONENTIAL = "exponential"
GAMMA_SCHEME = "scheme"

DEFAULT_SEED = 20240101
DEFAULT_HORIZON = 1.0
DEFAULT_STEPS = 40
DEFAULT_BROWNIAN_PATHS = 4
DEFAULT_SIM_PATHS = 10_000
DEFAULT_THREADS = 4
MAX_THREADS = 64
MAX_SIM_PATHS = 1_000_000

DEFAULT_COND_MAX = 1e12
ORTHONORMAL_TOL = 1e-10
DEFAULT_FIXED_POINT_TOL = 1e-12
DEFAULT_MAX_ITERATIONS = 200
DEFAULT_DAMPING = 0.5
DEFAULT_PICARD_TOL = 1e-12
DEFAULT_PICARD_MAX_ITERATIONS = 500
NON_CONTRACTION_STREAK = 3
DEFAULT_MAX_NODES = 2**24
DEFAULT_TRUNCATION_TOL = 1e-14
DEFAULT_SUP_SAMPLES = 4096
DEFAULT_ORDER_TOL = 1e-12
LADDER_ORDER_TOL = 1e-9
DEFAULT_LADDER_STOP_TOL = 1e-3
DEFAULT_BOX_RADIUS = 2.0
DEFAULT_GRID_SPACING_FACTOR = 1e-3
DEFAULT_MAX_RADIUS_FACTOR = 4.0
LOCAL_SEARCH_LEVELS = 12
CAUCHY_SLACK = 2.0
CAUCHY_ATOL = 1e-12
DRIVER_CHECK_TOL = 1e-9
MIN_ENSEMBLE = 100
SIGMA_BAND = 5.0
JOB_TIMEOUT = 600

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INAPPLICABLE = 2

VERDICT_PASSED = "passed"
VERDICT_STRICT = "strict"
VERDICT_INAPPLICABLE = "inapplicable"
VERDICT_VIOLATION = "violation"

SCHEMA_VERSION = 1

DEFAULT_MEASURE = ({"size": 1.0, "intensity": 1.0}, {"size": -0.5, "intensity": 0.5})
DEFAULT_SOLVE_DRIVER = "linear"
DEFAULT_SOLVE_TERMINAL = "constant"
DEFAULT_LADDER_DRIVER = "sqrt_capped"
DEFAULT_LADDER_TERMINAL = "constant"
DEFAULT_LADDER_XI = 0.25
DEFAULT_COMPARE_DRIVER = "affine"
DEFAULT_COMPARE_TERMINAL = "constant"
MAX_STEPS = 100_000
PICARD_AGREEMENT_TOL = 1e-8
REPRESENTATION_TOL = 1e-9
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
