# config.py
import os
from dotenv import load_dotenv

# Load from .env file first, override=True ensures .env file overrides system environment variables
load_dotenv(override=True)


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        return default


class Settings:
    # Worker pool for probes and per-time diagnostics
    THREADS = max(1, _int_env('SOLSCOPE_THREADS', 1))

    # Output location and verbosity
    OUTPUT_DIR = os.getenv('SOLSCOPE_OUTPUT_DIR', './runs')
    LOG_LEVEL = os.getenv('SOLSCOPE_LOG_LEVEL', 'INFO').upper()

    # Open-domain propagators are dense matrices; keep only a few alive
    OPEN_CACHE_SIZE = max(1, _int_env('SOLSCOPE_OPEN_CACHE', 8))

    # Numerical defaults shared by services and config parsing
    DEFAULT_M = 10.0
    DEFAULT_H1_CEILING_FACTOR = 10.0
    DEFAULT_MIN_SNAPSHOTS = 200
    CUTOFF_RADIUS = 10.0  # F(|x| >= 10) used by the localized-part construction
    LOG_GRID_MIN_POINTS = 256
    ALIASING_THRESHOLD = 1e-4

    # Output schema identifiers
    SCHEMA_SNAPSHOT = "solscope.snapshot/1"
    SCHEMA_MONITORS = "solscope.monitors/1"
    SCHEMA_SCATTERING = "solscope.scattering/1"
    SCHEMA_PSI_LOC = "solscope.psi_loc/1"
    SCHEMA_ESTIMATES = "solscope.estimates/1"
    SCHEMA_OBSERVABLES = "solscope.observables/1"
    SCHEMA_MANIFEST = "solscope.manifest/1"
    SCHEMA_INTERACTION = "solscope.interaction/1"
    SCHEMA_STRICHARTZ = "solscope.strichartz/1"
    SCHEMA_GROUND_STATE = "solscope.ground_state/1"

    VERSION = "1.0.0"


settings = Settings()
