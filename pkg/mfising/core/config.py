from pathlib import Path

from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    PROJECT_NAME: str = "mfising"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Exact enumeration caps
    EXACT_MAX_SITES: int = 24
    CW_MAX_SITES: int = 1_000_000
    BLOCKED_MAX_STATES: int = 10_000_000
    BLOCKED_MAX_BLOCKS: int = 3
    CONFIGURATION_MAX_SITES: int = 16
    TRANSITION_MAX_SITES: int = 12
    ENUMERATION_CHUNK: int = 1 << 16

    # Matrix storage and eigensolvers
    DENSE_MAX_SITES: int = 4096
    EIGEN_TOL: float = 1e-8
    EIGEN_MAX_ITER: int = 100_000

    # Random regular pairing
    REGULAR_MAX_RETRIES: int = 1000

    # Numerical tolerances
    FIXED_POINT_TOL: float = 1e-12
    QUAD_TOL: float = 1e-10
    AUX_GRID_TOL: float = 1e-10
    AUX_MASS_TOL: float = 1e-12
    MEAN_FIELD_SLACK: float = 1e-9

    # Runs
    DEFAULT_SEED: int = 20200101
    THREADS: int = 1
    OUTPUT_DIR: Path = Path("results")

    @field_validator("LOG_LEVEL", mode="after")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        """Accept lower-case level names from the environment"""
        return v.upper()

    @field_validator("THREADS", mode="after")
    @classmethod
    def at_least_one_thread(cls, v: int) -> int:
        if v < 1:
            raise ValueError("THREADS must be >= 1")
        return v

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
