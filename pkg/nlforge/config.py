import os
from typing import Literal, Optional

from dotenv import load_dotenv
from pydantic import field_validator
from pydantic_settings import BaseSettings

from nlforge.errors import InputError

# Load .env file from the project root
load_dotenv(dotenv_path=os.path.join(os.path.dirname(__file__), '..', '.env'))

MIN_TOL = 1e-10
MAX_TOL = 1e-4


class Settings(BaseSettings):
    # Solver
    NONLOCALITY_FORGE_TOL: float = 1e-8
    NONLOCALITY_FORGE_MAX_ITER: int = 200
    NONLOCALITY_FORGE_BACKEND: Literal["native", "cvxpy"] = "native"
    NONLOCALITY_FORGE_SEESAW_ROUNDS: int = 50

    # Verification suites
    NONLOCALITY_FORGE_THREADS: int = 1
    NONLOCALITY_FORGE_FIXTURES_DIR: str = "fixtures"

    # Logging / debugging
    NONLOCALITY_FORGE_LOG_LEVEL: str = "INFO"
    NONLOCALITY_FORGE_DEBUG_LOG: str = "debug.log"
    NONLOCALITY_FORGE_DUMP_DIR: Optional[str] = None

    @field_validator("NONLOCALITY_FORGE_TOL")
    @classmethod
    def _tol_in_range(cls, value: float) -> float:
        if not MIN_TOL <= value <= MAX_TOL:
            raise ValueError(f"tolerance {value} outside [{MIN_TOL}, {MAX_TOL}]")
        return value

    @field_validator("NONLOCALITY_FORGE_MAX_ITER", "NONLOCALITY_FORGE_THREADS", "NONLOCALITY_FORGE_SEESAW_ROUNDS")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @field_validator("NONLOCALITY_FORGE_LOG_LEVEL")
    @classmethod
    def _known_level(cls, value: str) -> str:
        level = value.upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {value!r}")
        return level


settings = Settings()


def check_tol(tol: Optional[float]) -> float:
    """Resolve a per-call tolerance against the configured default."""
    value = settings.NONLOCALITY_FORGE_TOL if tol is None else float(tol)
    if not MIN_TOL <= value <= MAX_TOL:
        raise InputError(f"tol={value} outside [{MIN_TOL}, {MAX_TOL}]")
    return value
