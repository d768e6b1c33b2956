"""Simulate runs of coordination protocols with failure detectors and check them."""

from .formula import TruthValue, parse_formula
from .model import ActionId, Run, SystemOfRuns
from .sim import ScenarioConfig, generate_system, simulate
from .verdict import Status, Verdict

__version__ = "0.1.0"

__all__ = [
    "ActionId",
    "Run",
    "ScenarioConfig",
    "Status",
    "SystemOfRuns",
    "TruthValue",
    "Verdict",
    "generate_system",
    "parse_formula",
    "simulate",
]
