from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    """
    Application settings. Environment variables can be used to override these values.
    """
    # Project
    PROJECT_NAME: str = "sectordyn"
    VERSION: str = "0.1.0"
    LOG_LEVEL: str = "INFO"

    # Output
    OUTPUT_DIR: str = "output"
    CSV_PRECISION: int = 17

    # Integration
    DEFAULT_DT: float = 1e-3
    STEP_WARN_RATIO: float = 0.1
    STEP_ERROR_RATIO: float = 0.5
    MAX_ORACLE_DIMENSION: int = 2048

    # Reservoir discretization
    DEFAULT_MASS_THRESHOLD: float = 1.0 - 1e-6
    FREQUENCY_MERGE_TOLERANCE: float = 1e-12

    # Verification tolerances
    NORM_TOLERANCE: float = 1e-6
    PSD_TOLERANCE: float = 1e-10
    TRACE_TOLERANCE: float = 1e-8

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"  # Allow extra fields in .env file


@lru_cache()
def get_settings() -> Settings:
    """
    Get cached settings instance.
    Returns:
        Settings: Application settings instance
    """
    return Settings()
