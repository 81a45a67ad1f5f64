"""Constants for ulocflow."""

DOMAIN = "ulocflow"

# Experiment configuration sections and keys.
CONF_GRID = "grid"
CONF_N = "N"
CONF_L = "L"

CONF_DATA = "data"
CONF_KIND = "kind"
CONF_PARAMS = "params"
CONF_SPLIT = "split"

CONF_SOLVER = "solver"
CONF_EPSILON_LIST = "epsilon_list"
CONF_T_TOTAL = "T_total"
CONF_DT = "dt"
CONF_TOL = "tol"
CONF_MAX_ITER = "max_iter"
CONF_C_PICARD = "c_picard"
CONF_WINDOW = "window"

CONF_PRESSURE = "pressure"
CONF_CENTERS = "centers"
CONF_TAU = "tau"
CONF_TOL_PRESS = "tol_press"

CONF_DIAGNOSTICS = "diagnostics"
CONF_R_LIST = "R_list"
CONF_T_LIST = "t_list"
CONF_PROBES = "probes"
CONF_TEST_FUNCTIONS = "test_functions"
CONF_CENTER = "center"
CONF_T0_LIST = "t0_list"
CONF_TOL_WEAK = "tol_weak"
CONF_LEI_FLOOR = "lei_floor"
CONF_THRESHOLD = "threshold"
CONF_ENERGY_BUDGET = "energy_budget"

CONF_EXTENSION = "extension"
CONF_DELTA = "delta"
CONF_RADIUS = "radius"

CONF_OUTPUT = "output"
CONF_DIR = "dir"
CONF_FORMATS = "formats"

DATA_KINDS = (
    "compact_bump",
    "constant",
    "slow_oscillation_shear",
    "mixed",
    "fixed_wave",
)
SHEAR_PROFILES = ("tanh", "log")
SPLIT_MODES = ("generator",)
OUTPUT_FORMATS = ("csv", "ulf")

# CLI verbs.
SERVICE_RUN = "run"
SERVICE_CHECK_KERNELS = "check-kernels"
SERVICE_VERIFY = "verify"

# Exit codes.
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

ENV_THREADS = "ULOCFLOW_THREADS"

# Lattice.
MIN_POINTS = 16
MIN_HALF_LENGTH = 8.0
MAX_SPACING = 0.25
PROBE_SPACING = 0.5
DIVERGENCE_TOL = 1e-10

# Field files.
FIELD_MAGIC = b"ULF1"
FIELD_HEADER = "<4sIddII"
FIELD_HEADER_SIZE = 32
INDEX_FILE = "index.json"
MANIFEST_FILE = "manifest.json"
FAILED_MARKER = "FAILED"
CSV_DIGITS = 17

# Solver defaults.
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 60
DEFAULT_C_PICARD = 1.0 / 64.0
MIN_STEPS = 16
RESTART_FRACTION = 7.0 / 8.0
BLOWUP_FACTOR = 10.0

# Verdict budgets.
DEFAULT_TOL_PRESS = 1e-2
DEFAULT_TOL_WEAK = 1e-4
DEFAULT_LEI_FLOOR = 2e-3
LEI_RESIDUAL_FACTOR = 5.0
DEFAULT_DECAY_THRESHOLD = 0.5
DEFAULT_ENERGY_BUDGET = 8.0
SLOPE_TOL = 0.15
T_TWENTIETH_SLOPE = 0.04

PASS = "PASS"
FAIL = "FAIL"
