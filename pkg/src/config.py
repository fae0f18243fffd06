"""
Runtime settings loaded from the environment (and an optional .env file)
"""

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from errors import ConfigurationError

load_dotenv()

DEFAULT_RESULTS_DIR = "sizing_results"
DEFAULT_MAX_STATES = 200_000
DEFAULT_MAX_DENSE_STATES = 5_000
DEFAULT_WORKERS = 4


@dataclass(frozen=True)
class Settings:
    tariff_book_path: Optional[str]
    results_dir: str
    max_states: int
    max_dense_states: int
    workers: int


def _int_setting(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got '{raw}'")
    if value < 1:
        raise ConfigurationError(f"{name} must be positive, got {value}")
    return value


def get_settings() -> Settings:
    """Read the current environment into a Settings record"""
    return Settings(
        tariff_book_path=os.getenv("STORAGE_SIZING_TARIFF_BOOK") or None,
        results_dir=os.getenv("STORAGE_SIZING_RESULTS_DIR") or DEFAULT_RESULTS_DIR,
        max_states=_int_setting("STORAGE_SIZING_MAX_STATES", DEFAULT_MAX_STATES),
        max_dense_states=_int_setting(
            "STORAGE_SIZING_MAX_DENSE_STATES", DEFAULT_MAX_DENSE_STATES
        ),
        workers=_int_setting("STORAGE_SIZING_WORKERS", DEFAULT_WORKERS),
    )
