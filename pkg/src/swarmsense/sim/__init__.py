"""Swarm simulator: scenario configs, world physics and the event loop."""
from .config import ScenarioConfig, bundled_scenario, load_scenario, with_param
from .engine import build_world, run_scenario, run_world, step
from .output import metrics_document, write_outputs
from .world import Metrics, World

__all__ = [
    "Metrics",
    "ScenarioConfig",
    "World",
    "build_world",
    "bundled_scenario",
    "load_scenario",
    "metrics_document",
    "run_scenario",
    "run_world",
    "step",
    "with_param",
    "write_outputs",
]
