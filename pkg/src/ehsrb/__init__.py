"""SRB measure estimation for slowed solenoid attractors.

Simulates the solid-torus solenoid with a neutral fixed point, detects
effective hyperbolic times along orbits, evolves admissible curves, estimates
the SRB measure by Cesaro-averaged pushforwards of leaf volume, and verifies
the closed-form laws governing passages through the neutral region.
"""

from .config import RunConfig, SystemSpec, default_config, load_config, save_config
from .systems import LocalSystem, SolenoidSystem, build_local_system, build_system

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "SystemSpec",
    "default_config",
    "load_config",
    "save_config",
    "SolenoidSystem",
    "LocalSystem",
    "build_system",
    "build_local_system",
    "__version__",
]
