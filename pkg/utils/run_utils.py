# Run bookkeeping helpers
import hashlib
import platform
from datetime import datetime, timezone
from typing import Dict

import numpy
import pydantic
import scipy


def config_hash(canonical_text: str) -> str:
    """SHA-256 of the canonical serialized config"""
    return hashlib.sha256(canonical_text.encode("utf-8")).hexdigest()


def format_timestamp(timestamp: datetime = None) -> str:
    if timestamp is None:
        timestamp = datetime.now(timezone.utc)
    return timestamp.isoformat()


def package_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }
