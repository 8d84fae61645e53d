from typing import Literal, Optional

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    # Logging
    LOG_FIRE_TOKEN: Optional[str] = None
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    # Reproducibility: overrides every config seed when set (CI fixtures)
    RIGFIX_SEED: Optional[int] = None

    # HTTP service
    APP_API_KEY: Optional[str] = None
    PORT: int = 8000

    model_config = {"env_file": ".env", "extra": "ignore"}


settings = Settings()


def seed_override() -> Optional[int]:
    """Re-read RIGFIX_SEED so commands see the environment at call time."""
    return Settings().RIGFIX_SEED
