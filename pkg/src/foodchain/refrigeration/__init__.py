"""Refrigerator thermal simulation, safe-off duration prediction, model
registry and demand-response fleet selection."""

from .defrost import DefrostExample, DefrostPredictor, extract_examples, train_defrost_predictor
from .fleet import FleetPlan, FridgeCandidate, select_fleet
from .registry import ModelRegistry, RegistryCorruptError, RegistryEntry
from .thermal import FridgeSpec, FridgeTrace, simulate_fleet, simulate_trace

__all__ = [
    "DefrostExample", "DefrostPredictor", "extract_examples", "train_defrost_predictor",
    "FleetPlan", "FridgeCandidate", "select_fleet",
    "ModelRegistry", "RegistryCorruptError", "RegistryEntry",
    "FridgeSpec", "FridgeTrace", "simulate_fleet", "simulate_trace",
]
