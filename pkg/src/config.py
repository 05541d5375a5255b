from pydantic_settings import BaseSettings
from pydantic import Field


class Settings(BaseSettings):
    model_config = {"env_file": ".env", "env_file_encoding": "utf-8", "extra": "ignore"}

    # Contour inversion (c = c_over_t / t, h = pi * h_times_t / t)
    c_over_t: float = Field(default=11.0, alias="MHT_C_OVER_T")
    h_times_t: float = Field(default=1.0, alias="MHT_H_TIMES_T")
    inversion_r: int = Field(default=9, alias="MHT_INVERSION_R")
    inversion_m: int = Field(default=25, alias="MHT_INVERSION_M")
    clamp_floor: float = Field(default=1e-10, alias="MHT_CLAMP_FLOOR")
    inversion_chunk_size: int = Field(default=8192, alias="MHT_INVERSION_CHUNK_SIZE")

    # Maximum likelihood
    fit_tolerance: float = Field(default=1e-6, alias="MHT_FIT_TOLERANCE")
    fit_max_iter: int = Field(default=500, alias="MHT_FIT_MAX_ITER")
    fit_multistart: int = Field(default=5, alias="MHT_FIT_MULTISTART")
    hessian_step: float = Field(default=1e-4, alias="MHT_HESSIAN_STEP")

    # Simulation
    sim_horizon: float = Field(default=1e6, alias="MHT_SIM_HORIZON")
    sim_batch_size: int = Field(default=100_000, alias="MHT_SIM_BATCH_SIZE")
    sim_bisection_tol: float = Field(default=1e-10, alias="MHT_SIM_BISECTION_TOL")

    n_jobs: int = Field(default=1, alias="MHT_N_JOBS")
    log_level: str = Field(default="INFO", alias="MHT_LOG_LEVEL")


settings = Settings()
