POLE_TOL = 1e-12
DEGENERATE_SPIKE_TOL = 1e-10
DEGENERATE_EIGENVALUE_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-10

SILVERSTEIN_MAX_ITER = 200
SILVERSTEIN_TOL = 1e-12
SUPPORT_BISECT_TOL = 1e-10
BRACKET_GROWTH = 2.0

Q_STAR_GRID_POINTS = 512
Q_STAR_XTOL = 1e-8
T_MAX = 1e4

EIGEN_CLAMP_FLOOR = -1e-10

DEFAULT_REPS = 1000
MIN_REPORTABLE_REPS = 100
DEFAULT_WORKERS = 1
DEFAULT_ALPHA_LEVEL = 0.05

SEED_INFO_PREFIX = b"spiketest/replication/"
SEED_LENGTH = 8

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_VALIDATION = 2
EXIT_NOT_DISTANT = 3
EXIT_EMPTY_RANGE = 4
EXIT_ESTIMATOR = 5
EXIT_NUMERICAL = 6
EXIT_IO = 7

SERVICE_HOST = "0.0.0.0"
SERVICE_PORT = 8000
