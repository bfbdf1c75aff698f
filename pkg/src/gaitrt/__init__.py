"""gaitrt: real-time lower-limb motion estimation from wearable sensors.

Chained machine-learning models (insole -> vGRF, IMU -> joint angles,
both -> joint moments) over a streaming 1 kHz signal pipeline, with a full
offline training/evaluation harness and a synthetic ground-truth generator.
"""

import logging
import os

from .errors import GaitrtError
from .series import SampleSeries

__version__ = "0.1.0"


def configure_logging() -> None:
    """Honor GAITRT_LOG_LEVEL in {error, warn, info, debug}."""
    level_name = os.environ.get("GAITRT_LOG_LEVEL", "warn").lower()
    level = {
        "error": logging.ERROR,
        "warn": logging.WARNING,
        "warning": logging.WARNING,
        "info": logging.INFO,
        "debug": logging.DEBUG,
    }.get(level_name, logging.WARNING)
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


__all__ = ["GaitrtError", "SampleSeries", "configure_logging", "__version__"]
