"""
Configuration parameters for polyplab
"""

# Canonical dataset format
SCHEMA_VERSION = 1
CHECKPOINT_SCHEMA_VERSION = 1
TOOL_VERSION = "0.3.0"

# Detection / artifact score thresholds
DET_THRESHOLD = 0.5       # polyp detections are always taken at 0.5
ARTIFACT_THRESHOLD = 0.25  # artifact boxes for the effect analyses
RELATION_IOU = 0.5

# Area share of the image a class must cover to count as present
AREA_THRESHOLDS = {
    'blur': 0.50,
    'specularity': 0.05,
    'misc': 0.02,
    'bubbles': 0.02,
    'contrast': 0.0,
    'saturation': 0.0,
}

# Focal loss
FOCAL_GAMMA = 2.5
FOCAL_ALPHA = 0.25
PROB_CLAMP = 1e-7

# Smooth L1 transition point
SMOOTH_L1_BETA = 1.0

# Anchor grid (single scale)
ANCHOR_STRIDE = 8
ANCHOR_SIZES = (8, 16, 32)
FG_IOU = 0.5
BG_IOU = 0.4
NMS_IOU = 0.5

# Toy trunk
GRID_SIZE = 64
POOL = 4
WINDOW = 6
HIDDEN = 16
INIT_SCALE = 0.1

# Loss weights (reg, art, pol)
LWF_LOSS_WEIGHTS = [(1, 1, 1), (1, 1, 3), (1, 1, 10), (1, 1, 20)]
POLYP_SHARES = [0.25, 0.50, 0.75]

# Most influential artifacts first; subsets grow from the front
ARTIFACT_PRIORITY = ['blur', 'specularity', 'misc', 'bubbles']
SUBSET_LOSS_WEIGHTS = [(1, 5, 1), (1, 1, 3), (1, 1, 3), (1, 1, 3)]

# Pseudo-label sweep
SWEEP_THRESHOLDS = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]

# Gradient check
GRADCHECK_STEP = 1e-6
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_COORDS = 200
GRADCHECK_FLOOR = 1e-2

# Exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_EMPTY = 3
EXIT_ALIGNMENT = 4
EXIT_DIVERGENCE = 5
