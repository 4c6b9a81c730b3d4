"""Energy-efficient task offloading under end-to-end latency constraints."""

from .scenario import ConfigError, ScenarioConfig, Task, generate_instance, load_config
from .pipelines import Solution, energy, run_dto, run_jto
from .lto import LtoBudgetError, kkt_allocate, lto_search

__all__ = [
    "ConfigError", "ScenarioConfig", "Task", "generate_instance", "load_config",
    "Solution", "energy", "run_dto", "run_jto", "LtoBudgetError", "kkt_allocate", "lto_search",
]
__version__ = "0.1.0"
