"""Slot-driven downlink multi-cell simulator with reference-user based
interference management, baseline allocators, and a brute-force oracle."""

from .engine import RunResult, Scenario, aat, aet, gat, run, sweep
from .presets import PRESETS, get_preset

__all__ = ["RunResult", "Scenario", "aat", "aet", "gat", "run", "sweep",
           "PRESETS", "get_preset"]

__version__ = "0.1.0"
