"""
Configuration module for the EquiSeek backend
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Config:
    """Application configuration"""

    # Base paths
    BASE_DIR = Path(__file__).parent
    OUTPUT_DIR = Path(os.getenv("OUTPUT_DIR", str(BASE_DIR / "runs")))

    # Server configuration
    HOST = os.getenv("HOST", "0.0.0.0")
    PORT = int(os.getenv("PORT", 8000))
    DEBUG = os.getenv("DEBUG", "False").lower() == "true"
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

    # CORS configuration
    CORS_ORIGINS = os.getenv("CORS_ORIGINS", "http://localhost:3000,http://localhost:5173").split(",")

    # Discretization defaults
    GRID_CELLS = int(os.getenv("GRID_CELLS", 100))
    STEFAN_GRID_CELLS = int(os.getenv("STEFAN_GRID_CELLS", 100))
    STEPS_PER_DITHER_PERIOD = 40
    DIFFUSION_NUMBER_TARGET = 0.1
    DIFFUSION_NUMBER_MAX = 1.0  # discrete maximum principle of the Crank-Nicolson scheme
    SAMPLES_PER_PERIOD = int(os.getenv("SAMPLES_PER_PERIOD", 20))

    # Series truncations and tolerances
    RAD_SERIES_TERMS = int(os.getenv("RAD_SERIES_TERMS", 12))
    STEFAN_SERIES_TERMS = int(os.getenv("STEFAN_SERIES_TERMS", 8))
    BESSEL_REL_TOL = float(os.getenv("BESSEL_REL_TOL", 1e-14))
    BISECTION_TOL = float(os.getenv("BISECTION_TOL", 1e-10))

    # Analysis
    DIVERGENCE_FACTOR = float(os.getenv("DIVERGENCE_FACTOR", 1000.0))
    TAIL_FRACTION = float(os.getenv("TAIL_FRACTION", 0.2))
    MIN_PERIODS_FOR_METRICS = 5

    # Order-one constants of the parabolic small-gain theorem; gamma_0 is scaled by epsilon
    SMALL_GAIN_CONSTANTS = {
        "gamma_0": float(os.getenv("SMALL_GAIN_GAMMA0", 1.0)),
        "gamma_1": float(os.getenv("SMALL_GAIN_GAMMA1", 1.0)),
        "b_1": -1.0,
        "a_1": 1.0,
    }
    K_H_INFLATION = 1e-6

    # Frequency ladder used when the scenario does not fix the multipliers
    FREQUENCY_LADDER_DENOMINATOR = 4
    FREQUENCY_LADDER_SIZE = 4000

    # Sweep execution
    SWEEP_WORKERS = int(os.getenv("SWEEP_WORKERS", 4))
