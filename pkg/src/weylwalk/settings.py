import os
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class WeylWalkSettings(BaseSettings):
    """
    Process-wide defaults, read from ``WEYLWALK_*`` environment variables.

    Attributes:
        threads (int): Worker threads for momentum sweeps. 0 means one per CPU.
        tol (float): Default tolerance for structural residuals.
        grid (int): Default momentum samples per dimension.
        log_level (str): Root log level used by the CLI.
    """
    threads : int = Field(0, ge=0, description="Worker threads for momentum sweeps (0 = auto).")
    tol : float = Field(1e-10, gt=0)
    grid : int = Field(64, ge=16)
    log_level : str = "WARNING"

    model_config = SettingsConfigDict(env_prefix="WEYLWALK_", extra="ignore")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, value: str):
        value = value.upper()
        if value not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown log level '{value}'.")
        return value

    def resolved_threads(self) -> int:
        return self.threads or os.cpu_count() or 1


def get_settings(**overrides) -> WeylWalkSettings:
    """
    Returns settings from the environment, with keyword overrides applied on top.
    """
    return WeylWalkSettings(**{k: v for k, v in overrides.items() if v is not None})


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads:
        return threads
    return get_settings().resolved_threads()
