import sys
from functools import lru_cache

from loguru import logger
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    app_name: str = "chronopt"
    app_version: str = "1.0.0"
    log_level: str = "INFO"
    threads: int = 4

    schema_version: str = "1.0"
    newton_tol: float = 1e-11
    newton_max_iters: int = 25
    act_tol_rel: float = 1e-8
    float_digits: int = 17
    default_seed: int = 42

    model_config = SettingsConfigDict(
        env_prefix="CHRONOPT_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    @property
    def concurrency(self) -> int:
        return max(1, self.threads)


@lru_cache
def get_settings() -> Settings:
    return Settings()


def configure_logging(level: str | None = None) -> None:
    logger.remove()
    logger.add(sys.stderr, level=(level or get_settings().log_level).upper())
