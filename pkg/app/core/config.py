from pydantic_settings import BaseSettings
from typing import List, Optional
import math


class Settings(BaseSettings):
    # App settings
    APP_NAME: str = "Cell Division Eigen Toolkit"
    VERSION: str = "1.0.0"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Execution
    THREADS: int = 1
    OUTPUT_DIR: str = "results"

    # Characteristic integrator
    ODE_METHOD: str = "DOP853"
    ODE_RTOL: float = 1e-10
    ODE_ATOL: float = 1e-12
    ODE_MAX_STEP: float = math.inf
    ODE_FIRST_STEP: Optional[float] = None
    FLOW_HORIZON: float = 200.0

    # Eigen solver
    EPSILON_SCHEDULE: List[float] = [1e-2, 1e-3, 1e-4]
    POWER_TOLERANCE: float = 1e-10
    POWER_MAX_ITERATIONS: int = 100000
    BISECTION_TOLERANCE: float = 1e-10

    # Age horizon selection
    AGE_TAIL_TOLERANCE: float = 1e-6
    QUADRATURE_TAIL_TOLERANCE: float = 1e-2
    AGE_HORIZON_MAX_DOUBLINGS: int = 10

    # Diagnostics
    ETA_MOMENTS: List[float] = [0.25, 0.5, 0.75]
    DIAGNOSTIC_TOLERANCE: float = 1e-2

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
