"""Secure short-packet UAV relaying: rate models, SCA planner and verification oracles."""

from .scenario import Scenario, default_scenario, load_scenario, validate
from .kernels import BACKEND

__all__ = ["Scenario", "default_scenario", "load_scenario", "validate", "BACKEND"]
__version__ = "0.1.0"
