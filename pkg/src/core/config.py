import os

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="ROBUSTSTOP_",
        extra="ignore",
    )

    # Parallelism (ROBUSTSTOP_THREADS)
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)

    # Problem defaults
    default_q_max: float = 1e3  # Ограничение допустимых управлений |q| ≤ q_max
    default_tol_region: float = 1e-6  # Порог классификации v - g > tol

    # Solver defaults
    tol_outer: float = 1e-8
    tol_inner: float = 1e-10
    max_outer: int = 200
    max_inner: int = 50_000
    omega: float = 1.5

    # Monte Carlo defaults
    sim_dt: float = 1e-3
    sim_n_paths: int = 100_000
    sim_batch_size: int = 4096  # Путей на один поток RNG

    # Logging settings
    log_level: str = "INFO"
    log_to_file: bool = False
    log_file_path: str = "logs/robuststop.log"
    log_json: bool = False


settings = Settings()
