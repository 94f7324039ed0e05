import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Defaults shared by the CLI, the API and RunConfig
DEFAULT_GAMMA = 0.5
DEFAULT_ALPHA = 0.1
DEFAULT_DELTA = 0.05
DEFAULT_OUTLIER_DELTA_QUANTILE = 0.9
DEFAULT_OUTLIER_SCORE_QUANTILE = 0.5
DEFAULT_SEED = 0


@dataclass(frozen=True)
class Settings:
    database_url: str
    log_level: str
    threads: int
    record_runs: bool


def _env_flag(name: str) -> bool:
    return os.getenv(name, "").strip().lower() in {"1", "true", "yes", "on"}


def default_threads() -> int:
    raw = os.getenv("CBI_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def get_settings() -> Settings:
    return Settings(
        database_url=os.getenv("CBI_DATABASE_URL", "sqlite:///./cbi_runs.db"),
        log_level=os.getenv("CBI_LOG_LEVEL", "WARNING").upper(),
        threads=default_threads(),
        record_runs=_env_flag("CBI_RECORD_RUNS"),
    )


def configure_logging(level: Optional[str] = None) -> None:
    """Attach one stderr handler to the package logger (idempotent)."""
    level = (level or get_settings().log_level).upper()
    root = logging.getLogger("backend.app")
    root.setLevel(level)
    if not any(getattr(h, "_cbi_handler", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._cbi_handler = True
        root.addHandler(handler)
