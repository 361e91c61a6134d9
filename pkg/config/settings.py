import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    # Filesystem Configuration (the only values read from the environment)
    OUTPUT_DIR = os.getenv("REGISTRA_OUTPUT_DIR", "output")
    CACHE_DIR = os.getenv("REGISTRA_CACHE_DIR", "cache")
    EXPERIMENTS_DIR = os.getenv("REGISTRA_EXPERIMENTS_DIR", "experiments")

    # Normalization Configuration
    NORMALIZATION_HALF_EXTENT = 2.0  # clouds are mapped into [-2, 2] per axis

    # Sampling Configuration
    INPUT_SIZE = 1024  # points kept by FPS before feature extraction
    SUBSAMPLE_CHAIN = (1024, 512, 256)  # encoder FPS schedule
    FEATURE_RADII = (0.1, 0.2, 0.4)  # neighborhood radii, normalized units
    FPS_START = 0

    # Feature Configuration
    FEATURE_BACKEND = "handcrafted"  # oracle, handcrafted or file:<path>
    ORACLE_DIM = 128
    HISTOGRAM_BINS = 8  # distance bins per radius for the handcrafted descriptor
    INTERPOLATION_NEIGHBORS = 3
    INTERPOLATION_EPS = 1e-8

    # Matching Configuration
    TOP_K = 128
    MATCH_TEMPERATURE = 1.0  # plain softmax over similarities
    SHARP_MATCH_TEMPERATURE = 0.05
    LOW_CONFIDENCE_FACTOR = 3.0  # flagged below this multiple of the uniform level
    CONFIDENCE_DISPLAY_THRESHOLD = 0.08

    # Refinement Configuration
    ENABLE_REFINEMENT = True
    DENOISE_NEIGHBORS = 15  # P
    DENOISE_TEMPERATURE = 0.003  # divides squared feature distances
    DENOISE_AFTER_COARSE = True  # neighborhood lookup in the coarse-aligned frame

    # ICP Configuration
    ICP_MAX_ITERATIONS = 50
    ICP_TOLERANCE = 1e-6
    ICP_MAX_CORRESPONDENCE_DISTANCE = None

    # Loss Configuration
    LOSS_LAMBDA = 0.6  # weight of the coarse term

    # Benchmark Configuration
    ROTATION_LEVELS = (-180.0, -135.0, -90.0, -45.0, 45.0, 90.0, 135.0, 180.0)
    AXES_MODE = "z"  # x, y, z or xyz
    TRIALS_PER_LEVEL = 5
    NOISE_SIGMA = 0.0  # 0.01 reproduces the noisy protocol
    INITIAL_SAMPLE = 7168
    BASE_CLOUD_SIZE = 8192
    BASE_SHAPE = "lshape"
    PAIRING_MODE = "exact"  # exact or disjoint
    BENCH_METHODS = ("coarse", "refined", "icp")
    BENCH_WORKERS = 1
    SEED = 0

    # IO Configuration
    XYZ_PRECISION = 9  # significant digits written to .xyz files
    REPORT_PRECISION = 6

    # Cache Configuration
    ENABLE_CACHE = False

    # Logging Configuration
    VERBOSE = False

    @classmethod
    def validate(cls):
        if cls.TOP_K < 1:
            raise ValueError("TOP_K must be at least 1")
        if cls.DENOISE_NEIGHBORS < 1:
            raise ValueError("DENOISE_NEIGHBORS must be at least 1")
        if cls.MATCH_TEMPERATURE <= 0 or cls.DENOISE_TEMPERATURE <= 0:
            raise ValueError("temperatures must be positive")
        if not 0.0 <= cls.LOSS_LAMBDA <= 1.0:
            raise ValueError("LOSS_LAMBDA must lie in [0, 1]")
        chain = list(cls.SUBSAMPLE_CHAIN)
        if any(later > earlier for earlier, later in zip(chain, chain[1:])):
            raise ValueError(f"SUBSAMPLE_CHAIN must be non-increasing, got {chain}")
        return True

settings = Settings()
