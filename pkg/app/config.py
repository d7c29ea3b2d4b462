import logging
import logging.config
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


ROOT_DIR = Path(__file__).parent.parent
ENV_FILE = ROOT_DIR / "config" / ".env"


class Settings(BaseSettings):
    PROJECT_NAME: str = "graspalign"
    VERSION: str = "0.1.0"

    LOGGING_CONF_FILE: str = "logging.conf"
    LOG_LEVEL: str = "INFO"

    # default worker count for batch runs, overridden by the run config
    GRASP_WORKERS: int = 1

    # central-difference step for SDF spatial gradients (meters)
    SDF_FD_STEP: float = 1e-5

    @field_validator("GRASP_WORKERS", mode="after")
    @classmethod
    def check_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"GRASP_WORKERS must be >= 1, got {v}")
        return v

    @field_validator("LOG_LEVEL", mode="after")
    @classmethod
    def normalize_level(cls, v: str) -> str:
        return v.upper()

    model_config = SettingsConfigDict(
        case_sensitive=True,
        env_file=str(ENV_FILE),
        extra="ignore",
    )


@lru_cache
def get_settings() -> Settings:
    return Settings()  # type: ignore[call-arg]


def load_environment(env_file: Path | str = ENV_FILE) -> bool:
    """Export env_file into os.environ and drop the cached settings"""
    loaded = load_dotenv(env_file)
    get_settings.cache_clear()
    return loaded


load_environment()
settings = get_settings()


def configure_logging(level: str | None = None) -> None:
    """
    Configure logging from LOGGING_CONF_FILE when it exists,
    otherwise fall back to a basic stderr handler
    """
    conf_file = Path(settings.LOGGING_CONF_FILE)
    if not conf_file.is_absolute():
        conf_file = ROOT_DIR / conf_file

    if conf_file.exists():
        logging.config.fileConfig(conf_file, disable_existing_loggers=False)
        if level:
            logging.getLogger().setLevel(level.upper())
        return

    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
