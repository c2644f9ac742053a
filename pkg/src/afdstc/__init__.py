"""Simulation and analysis of amplify-and-forward distributed space-time coded relay networks."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapabilityError,
    ConfigError,
    ContractError,
    ConvergenceError,
    DomainError,
    PrecisionWarning,
)
from .network import ModulationFamily, ModulationSpec, NetworkConfig, modulation_constants  # noqa: E402
from .powerctl import RelayReference, SchemeId  # noqa: E402
from .analysis import Provenance, SerCurve  # noqa: E402
from .montecarlo import SimPlan, SimResult, run_sim  # noqa: E402

__all__ = [
    "__version__",
    "CapabilityError",
    "ConfigError",
    "ContractError",
    "ConvergenceError",
    "DomainError",
    "PrecisionWarning",
    "ModulationFamily",
    "ModulationSpec",
    "NetworkConfig",
    "modulation_constants",
    "RelayReference",
    "SchemeId",
    "Provenance",
    "SerCurve",
    "SimPlan",
    "SimResult",
    "run_sim",
]
