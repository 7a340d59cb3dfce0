import logging
import math
import os
from typing import Optional


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None):
    """Configures the logging for the application."""
    level = level or os.getenv("HPFNAV_LOG_LEVEL", "INFO")
    log_file = log_file or os.getenv("HPFNAV_LOG_FILE", "hpfnav.log")
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[
            logging.FileHandler(log_file, encoding="utf-8"),
            logging.StreamHandler()
        ],
        force=True,
    )


def wrap_angle(angle: float) -> float:
    """Wraps an angle to (-pi, pi]."""
    wrapped = math.fmod(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    elif wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def fmt17(value: float) -> str:
    """Decimal text with 17 significant digits; exact float round-trip."""
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return format(value, ".17g")
