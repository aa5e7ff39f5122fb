"""
M^X/M/c catastrophe-queue toolkit configuration
"""
from typing import Optional

from dotenv import load_dotenv
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()

VALID_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
STEHFEST_ORDERS = {8, 10, 12, 14, 16}


class Settings(BaseSettings):
    """Application configuration"""

    model_config = SettingsConfigDict(
        env_prefix="MXMC_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # Logging Settings
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None
    LOG_MAX_BYTES: int = 5_000_000
    LOG_BACKUP_COUNT: int = 3

    # Truncation Settings
    TAIL_EPSILON: float = 1e-10
    EQUILIBRIUM_TAIL: float = 1e-12
    TRUNCATION_CAP: int = 10_000
    LOADER_TAIL_EPSILON: float = 1e-12

    # Root-finding Settings
    ROOT_MAX_ITER: int = 200

    # Inversion Settings
    STEHFEST_ORDER: int = 12

    # Simulation Settings
    SIM_REPLICATIONS: int = 10_000
    SIM_SEED: int = 42
    SIM_WORKERS: int = 1
    SIM_HORIZON: float = 1_000.0

    # Comparison Settings
    COMPARE_Z_THRESHOLD: float = 4.0
    REPORT_DIR: str = "reports"

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v):
        v = v.upper()
        if v not in VALID_LOG_LEVELS:
            raise ValueError(f"LOG_LEVEL must be one of {sorted(VALID_LOG_LEVELS)}")
        return v

    @field_validator("TAIL_EPSILON", "EQUILIBRIUM_TAIL", "LOADER_TAIL_EPSILON", "SIM_HORIZON", "COMPARE_Z_THRESHOLD")
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError("tolerances and horizons must be positive")
        return v

    @field_validator("TRUNCATION_CAP", "ROOT_MAX_ITER", "SIM_REPLICATIONS", "SIM_WORKERS")
    @classmethod
    def validate_count(cls, v):
        if v < 1:
            raise ValueError("counts must be at least 1")
        return v

    @field_validator("STEHFEST_ORDER")
    @classmethod
    def validate_order(cls, v):
        if v not in STEHFEST_ORDERS:
            raise ValueError(f"STEHFEST_ORDER must be one of {sorted(STEHFEST_ORDERS)}")
        return v

    @property
    def file_logging_enabled(self) -> bool:
        return bool(self.LOG_FILE)


# Error Messages
ERROR_MESSAGES = {
    'no_batch_arrivals': 'no batch arrivals: at least one b_j (j >= 2) must be positive',
    'no_service_capacity': 'no service capacity: b0 must be positive',
    'negative_rate': 'rates must be non-negative',
    'non_finite_rate': 'rates must be finite',
    'bad_server_count': 'c must be a positive integer',
    'bad_index': 'index out of range',
    'bad_argument': 'argument outside the domain |s| <= 1',
    'lambda_not_positive': 'lambda must be positive',
    'lambda_too_small': 'lambda below 1e-12 is not evaluated; use the regime instead',
    'derivative_singular': 'derivative singular near criticality',
    'recursion_unstable': 'recursion unstable; reduce J or raise precision',
    'truncation_cap': 'truncation cap reached while the tail is still above 1e-6',
    'singular_system': 'boundary system is singular',
    'resurrection_required': 'resurrection required: h must be positive',
    'use_catastrophe_module': 'use catastrophe module: beta must be zero here',
    'use_resurrect_module': 'beta is zero: use the resurrect module',
    'no_equilibrium': 'no equilibrium: the process is not positive recurrent',
    'equilibrium_degenerate': 'h = 0: equilibrium is degenerate at state 0; use hitting_time_h0',
    'use_catastrophe_time_ops': 'h > 0: use catastrophe_time ops',
    'limit_not_covered': 'limit not covered by the theory for critical drift',
    'eta_singular': '1 - beta * r00 vanished',
    'moment_mismatch': 'closed-form moments disagree with the transform derivatives at 0+',
    'bad_order': 'Stehfest order must be one of 8, 10, 12, 14, 16',
    'bad_precision': 'extended inversion precision must be a positive digit count',
    'transform_not_extended': 'extended-precision inversion needs a transform that evaluates in mpmath',
    'time_not_positive': 't must be positive',
    'bad_variant': 'unknown process variant',
    'variant_mismatch': 'variant is inconsistent with the model parameters',
    'bad_statistic': 'statistic is incompatible with the variant',
    'horizon_exhausted': 'horizon exhausted before any event of interest',
    'invalid_state': 'invalid state for this variant',
    'unreadable_model': 'model file could not be read',
    'bad_config': 'replications must be at least 1 and the horizon positive',
}


# Load configuration instance
settings = Settings()
