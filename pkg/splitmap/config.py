"""Application configuration."""

from functools import lru_cache

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process settings from environment variables."""

    # Artifacts
    output_dir: str = "runs"

    # Intra-run parallelism (independent diagnostic curves)
    threads: int = 1

    # Numerical defaults
    stability_factor: float = 0.2  # dt <= stability_factor * h^2
    membership_factor: float = 1e-9  # membership tolerance relative to diameter
    condition_bound: float = 1e10  # chart metric condition number limit

    # Logging
    log_level: str = "INFO"

    model_config = {
        "env_prefix": "SPLITMAP_",
        "env_file": ".env",
    }


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
