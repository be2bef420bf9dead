from pathlib import Path
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process settings loaded from the environment (prefix BDBNN_) and an optional .env file."""

    # Locations
    data_dir: Path = Path("data")
    artifact_dir: Path = Path("artifacts")

    # Execution
    threads: int = 1
    precision: Literal["float32", "float64"] = "float32"
    default_seed: int = 0

    # Application settings
    app_name: str = "bdbnn"
    log_level: str = "INFO"
    max_upload_mb: int = 200

    model_config = SettingsConfigDict(
        env_prefix="BDBNN_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore"
    )


settings = Settings()
