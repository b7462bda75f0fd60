"""File format constants and hyperparameter defaults."""

# Feature file formats
FEATURE_MAGIC = b"TPDD"
FEATURE_FORMAT_VERSION = 1

# Model archives
ARCHIVE_MAGIC = b"TPDA"
ARCHIVE_FORMAT_VERSION = 1

# File kinds, with their binary codes
KIND_FEATURES = "features"
KIND_LOGITS = "logits"
KIND_SCORES = "scores"
KIND_LANDSCAPE = "landscape"
KIND_FAR_OOD = "far_ood"
KIND_NEAR_OOD = "near_ood"
KIND_RAY_OOD = "ray_ood"

KIND_CODES = {
    KIND_FEATURES: 0,
    KIND_LOGITS: 1,
    KIND_SCORES: 2,
    KIND_LANDSCAPE: 3,
    KIND_FAR_OOD: 4,
    KIND_NEAR_OOD: 5,
    KIND_RAY_OOD: 6,
}

# Model kinds stored in archives
MODEL_TAPMB = "tapmb"
MODEL_TAPUDD = "tapudd"
MODEL_TAPMOS = "tapmos"
MODEL_TIED_MB = "tied_mb"
MODEL_KL_REFS = "kl_refs"

MODEL_KINDS = [MODEL_TAPMB, MODEL_TAPUDD, MODEL_TAPMOS, MODEL_TIED_MB, MODEL_KL_REFS]

# Ensemble strategies
STRATEGY_AVERAGE = "average"
STRATEGY_TRIMMED_AVERAGE = "trimmed_average"
STRATEGY_SEESAW = "seesaw"
STRATEGY_TOP = "top"
STRATEGY_BOTTOM = "bottom"

STRATEGIES = [
    STRATEGY_AVERAGE,
    STRATEGY_TRIMMED_AVERAGE,
    STRATEGY_SEESAW,
    STRATEGY_TOP,
    STRATEGY_BOTTOM,
]

# Ensemble defaults
DEFAULT_K_LIST = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 16, 32]
DEFAULT_N_E = 8
DEFAULT_TRIM = 2
DEFAULT_STRATEGY = STRATEGY_AVERAGE

# EM / K-means defaults
DEFAULT_MAX_ITER = 200
DEFAULT_TOL = 1e-4
DEFAULT_REG_COVAR = 1e-6
DEFAULT_N_INIT = 3

# TAP-MOS training defaults
DEFAULT_EPOCHS = 100
DEFAULT_BATCH_SIZE = 64
DEFAULT_LEARNING_RATE = 0.1

# Numerical floors
PSD_FLOOR = 1e-3
CHOLESKY_RETRIES = 3
KL_FLOOR = 1e-12

# Synthetic data
RNG_ALGORITHM = "numpy.random.PCG64"
FAR_OOD_DENSITY = 1e-8
NEAR_OOD_POINTS = 50
RAY_FACTOR = 3.0

# Environment
THREADS_ENV = "TAPUDD_THREADS"
