from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional


class Settings(BaseSettings):
    PROJECT_NAME: str = "priormix"

    # Overrides base_seed of every experiment document (PRIORMIX_SEED)
    SEED: Optional[int] = None

    LOG_LEVEL: str = "INFO"

    # Default locations, override in .env
    OUTPUT_DIR: str = "runs"
    DATA_DIR: str = "data"

    # Sweep executor
    JOBS: int = 1

    # Rows per forward pass when evaluating large test sets
    EVAL_CHUNK_SIZE: int = 4096

    model_config = SettingsConfigDict(
        env_file=".env", env_prefix="PRIORMIX_", extra="ignore")


settings = Settings()
