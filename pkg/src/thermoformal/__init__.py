"""Thermodynamic formalism experiments for solenoid-like partially hyperbolic attractors.

Submodules: base_dynamics (expanding torus maps), solenoid (the skew product),
decomposition (orbit collections and gluing), thermo (pressure estimation),
equilibrium (transfer operators and SRB checks), config and cli.
"""

from .base_dynamics import BaseMap, BaseMapConfig, ConfigError, build_expansion_profile
from .config import ExperimentConfig, load_config, load_preset, parse_config
from .decomposition import DecompositionParams
from .solenoid import SkewProduct, SolenoidPoint

__version__ = "0.1.0"

__all__ = [
    "BaseMap",
    "BaseMapConfig",
    "ConfigError",
    "DecompositionParams",
    "ExperimentConfig",
    "SkewProduct",
    "SolenoidPoint",
    "build_expansion_profile",
    "load_config",
    "load_preset",
    "parse_config",
]
