"""Descriptor models of gas, water and power networks with interpolatory reduction.

Typical use::

    from netmor import build_model, parse_config, preset_path, reduce, simulate, tirka_config

    cfg = parse_config(preset_path("table1_gas.cfg"))
    dae = build_model(cfg)
    run = simulate(dae)
    red = reduce(dae, tirka_config(cfg))
"""

__version__ = "0.1.0"

from .config import (NetworkConfig, build_model, parse_config, parse_config_text, preset_path,
                     serialize_config, tirka_config)
from .dae import LinearPart, UnifiedDae, eval_transfer, linearize, make_dae, sigma_max_sweep
from .errors import (ConfigError, DimensionError, DivergenceError, HigherIndexError, NetmorError,
                     NonphysicalPressureError, RankDeficiencyError, SingularPencilError,
                     SingularShiftError, TopologyError)
from .integrator import SimulationResult, StepperConfig, simulate, steady_state_residual, step
from .mor import ReducedModel, TirkaConfig, reduce, tirka_iterate, verify_interpolation

__all__ = [
    "ConfigError", "DimensionError", "DivergenceError", "HigherIndexError", "LinearPart",
    "NetmorError", "NetworkConfig", "NonphysicalPressureError", "RankDeficiencyError",
    "ReducedModel", "SimulationResult", "SingularPencilError", "SingularShiftError",
    "StepperConfig", "TirkaConfig", "TopologyError", "UnifiedDae", "build_model",
    "eval_transfer", "linearize", "make_dae", "parse_config", "parse_config_text",
    "preset_path", "reduce", "serialize_config", "sigma_max_sweep", "simulate",
    "steady_state_residual", "step", "tirka_config", "tirka_iterate", "verify_interpolation",
]
