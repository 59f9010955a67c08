"""
Configuration settings for the ASGNet desk toolkit
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Model defaults (overridable through the environment)
DEFAULT_INPUT_SIZE = int(os.getenv("ASGNET_INPUT_SIZE", "352"))
DEFAULT_UNIFIED_WIDTH = int(os.getenv("ASGNET_UNIFIED_WIDTH", "96"))
DEFAULT_SEED = int(os.getenv("ASGNET_SEED", "42"))
DEFAULT_THRESHOLD = float(os.getenv("ASGNET_THRESHOLD", "0.5"))
FFT_METHOD = os.getenv("ASGNET_FFT_METHOD", "direct")
LOG_LEVEL = os.getenv("ASGNET_LOG_LEVEL", "WARNING")
METRIC_WORKERS = int(os.getenv("ASGNET_METRIC_WORKERS", "1"))
CACHE_TTL = int(os.getenv("ASGNET_CACHE_TTL", "300"))  # Dashboard cache, seconds

# Encoder widths for stages 2-5
DEFAULT_ENCODER_CHANNELS = (64, 128, 256, 512)
DESK_ENCODER_CHANNELS = (16, 32, 64, 128)
ENCODER_PRESETS = {
    "default": DEFAULT_ENCODER_CHANNELS,
    "desk": DESK_ENCODER_CHANNELS,
}

STAGES = (2, 3, 4, 5)
MIN_UNIFIED_WIDTH = 8
SIZE_DIVISOR = 32

# Atrous filling rates of the semantic extractor
DEFAULT_DILATIONS = (3, 6, 9, 12, 15, 18)
DILATION_PRESETS = {
    "uniform": (1, 1, 1, 1, 1, 1),
    "linear": (1, 2, 3, 4, 5, 6),
    "wide": (2, 4, 6, 8, 12, 16),
    "default": DEFAULT_DILATIONS,
}

# Sizes studied in the sensitivity analysis
INPUT_SIZE_CHOICES = (256, 288, 352, 384, 416)
DECODER_WIDTH_CHOICES = (32, 64, 96, 128, 160)

# Numerics
NORM_EPS = 1e-5
SMOOTH_EPS = 1.0        # IoU / Dice smoothing
BORDER_KERNEL = 31      # pixel-weight average pool
BORDER_GAIN = 5.0
FD_STEP = 1e-3          # finite-difference step
GRAD_TOLERANCE = 1e-4

# Weighted F-measure constants
WFM_GAUSS_SIZE = 7
WFM_GAUSS_SIGMA = 5.0
WFM_BETA2 = 1.0
SM_ALPHA = 0.5

# File extensions
IMAGE_EXTENSIONS = (".pgm", ".ppm")
TENSOR_EXTENSION = ".ast"

# Dashboard page configuration
PAGE_CONFIG = {
    "page_title": "ASGNet Evaluation Monitor",
    "page_icon": "🔬",
    "layout": "wide",
    "initial_sidebar_state": "expanded"
}

# Custom CSS styling
CUSTOM_CSS = """
<style>
    .stMetric {
        background: linear-gradient(135deg, #1e3a5f 0%, #0d1b2a 100%);
        border-radius: 12px;
        padding: 15px;
    }
    h1 {
        color: #29b5e8;
    }
    .stDataFrame {
        border-radius: 8px;
    }
</style>
"""
