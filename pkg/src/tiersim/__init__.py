"""Performance and energy simulator for MoE serving on tiered 3D DRAM with near-memory processing."""

from .config import Config, ConfigError, ModelConfig, SimConfig, SystemConfig, WorkloadConfig, load_config, model_preset, preset
from .report import SimReport, compare
from .serving import run_serving
from .timing import build_tier_table

__version__ = "0.1.0"

__all__ = [
    "Config",
    "ConfigError",
    "ModelConfig",
    "SimConfig",
    "SimReport",
    "SystemConfig",
    "WorkloadConfig",
    "build_tier_table",
    "compare",
    "load_config",
    "model_preset",
    "preset",
    "run_serving",
]
