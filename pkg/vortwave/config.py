from pydantic_settings import BaseSettings
from functools import lru_cache

class Settings(BaseSettings):
    # Parallelism
    VORTWAVE_THREADS: int = 1

    # Logging
    VORTWAVE_LOG_LEVEL: str = "INFO"

    # Elliptic oracle
    VORTWAVE_TOL_BVP: float = 1e-9
    VORTWAVE_COND_MAX: float = 1e12
    VORTWAVE_DEFAULT_M: int = 24

    # Spectral substrate
    VORTWAVE_MEAN_TOL: float = 1e-10
    VORTWAVE_DEALIAS_RULE: float = 2.0 / 3.0

    # Paradifferential cutoff
    VORTWAVE_CUTOFF_EPS1: float = 0.2
    VORTWAVE_CUTOFF_EPS2: float = 0.5

    # HTTP surface
    VORTWAVE_API_HOST: str = "0.0.0.0"
    VORTWAVE_API_PORT: int = 8000

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"  # Ignore extra fields in .env file

@lru_cache()
def get_settings():
    return Settings()
