import logging
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Output
    out_dir: str = "runs"

    # Execution
    workers: int = 1

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    quiet: bool = False

    model_config = SettingsConfigDict(env_prefix="FORUM_", env_file=".env", case_sensitive=False)


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get settings singleton"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Drop the cached instance so the next call re-reads the environment"""
    global _settings
    _settings = None


def configure_logging(settings: Settings, quiet: Optional[bool] = None) -> None:
    quiet = settings.quiet if quiet is None else quiet
    level = logging.WARNING if quiet else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format=settings.log_format, force=True)
