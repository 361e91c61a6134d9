# Registration Parameter Presets

## Backend Kinds
ORACLE = "oracle"            # identical descriptors on corresponding points
HANDCRAFTED = "handcrafted"  # rotation-invariant local statistics
PRECOMPUTED = "precomputed"  # descriptors loaded from a feature file

## Preset Definitions
DEFAULT_PRESET = {
    "preset_id": "default",
    "name": "Default pipeline",
    "description": "Plain softmax over raw similarities, K=128, P=15",
    "pipeline": {
        "input_size": 1024,
        "subsample_chain": [1024, 512, 256],
        "radii": [0.1, 0.2, 0.4],
        "k": 128,
        "temperature": 1.0,
    },
    "denoise": {
        "p": 15,
        "temperature": 0.003,
    },
}

SHARP_PRESET = {
    "preset_id": "sharp",
    "name": "Sharpened matching",
    "description": "Unit-norm descriptors in [-1, 1] need a sharper softmax",
    "pipeline": {
        "input_size": 1024,
        "subsample_chain": [1024, 512, 256],
        "radii": [0.1, 0.2, 0.4],
        "k": 128,
        "temperature": 0.05,
    },
    "denoise": {
        "p": 15,
        "temperature": 0.003,
    },
}

ICP_PRESET = {
    "preset_id": "icp",
    "name": "Point-to-point ICP",
    "description": "Baseline with nearest-neighbor correspondences",
    "icp": {
        "max_iterations": 50,
        "convergence_tol": 1e-6,
        "max_correspondence_distance": None,
    },
}

PRESETS = {
    DEFAULT_PRESET["preset_id"]: DEFAULT_PRESET,
    SHARP_PRESET["preset_id"]: SHARP_PRESET,
    ICP_PRESET["preset_id"]: ICP_PRESET,
}
