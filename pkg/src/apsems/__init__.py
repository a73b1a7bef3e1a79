"""Frequency-secure energy management for autonomous power systems.

Schedules gas turbines and a battery under probabilistic net-load
uncertainty, allocates droop and virtual-inertia reserves through a MILP,
and checks each schedule against a nonlinear swing-equation simulator.
"""

from .core_types import (
    ConfigTable,
    EssSpec,
    GeneratorSpec,
    GridSpec,
    HorizonSpec,
    System,
    SystemConfigError,
    config_table,
    load_system,
    validate_system,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigTable",
    "EssSpec",
    "GeneratorSpec",
    "GridSpec",
    "HorizonSpec",
    "System",
    "SystemConfigError",
    "config_table",
    "load_system",
    "validate_system",
]
