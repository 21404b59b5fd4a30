"""Configuration management for the LDP rating collector."""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Project paths
PROJECT_ROOT = Path(__file__).parent
RESULTS_DIR = PROJECT_ROOT / os.getenv("LDP_RESULTS_DIR", "results")

# Canonical output formatting
SIGNIFICANT_DIGITS = 12
CSV_LINE_TERMINATOR = "\n"

# Certification
CERTIFICATION_TOLERANCE = 1e-9
WILSON_CONFIDENCE = 0.999
FREQUENCY_SE_MULTIPLIER = 4.0
MIN_COMPOSITION_SAMPLES = 1_000_000
MIN_FREQUENCY_SAMPLES = 100_000
MAX_COMPOSITION_DIMENSION = 3

# Completion solver defaults
SVD_RELATIVE_CUTOFF = 1e-10
DEFAULT_MAX_ITERATIONS = 500
DEFAULT_STEP_TOLERANCE = 1e-9
DEFAULT_CONSTRAINT_TOLERANCE = 1e-3
DEFAULT_BISECTION_STEPS = 60
DEFAULT_RANK_CAP = 1000
CONTINUATION_FACTOR = 0.5

# Experiments
MIN_COVERAGE_TRIALS = 100
DEFAULT_SEED = 0


def format_float(value: float) -> str:
    """Format a float with the canonical number of significant digits."""
    return format(float(value), f".{SIGNIFICANT_DIGITS}g")


if __name__ == "__main__":
    print("Testing configuration...")
    print(f"✓ Results directory: {RESULTS_DIR}")
    print(f"✓ Float format: {format_float(3.14159265358979)}")
    print("\n✅ All configuration tests passed!")
