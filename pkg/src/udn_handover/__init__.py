"""Handover rates and user association in two-tier cellular networks with
antenna and user heights: an analytical engine and a Monte Carlo simulator."""

__version__ = "0.1.0"

from .analytics import Analysis, HandoverReport, analyze, association_probabilities
from .model import (
    ConfigError,
    PairGeometry,
    ScenarioConfig,
    SimSettings,
    TierParams,
    load_config,
    normalize_units,
    pair_geometry,
    table_one,
)
from .simulator import SimulationResult, estimate

__all__ = [
    "Analysis",
    "ConfigError",
    "HandoverReport",
    "PairGeometry",
    "ScenarioConfig",
    "SimSettings",
    "SimulationResult",
    "TierParams",
    "analyze",
    "association_probabilities",
    "estimate",
    "load_config",
    "normalize_units",
    "pair_geometry",
    "table_one",
]
