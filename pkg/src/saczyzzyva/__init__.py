"""Speculative BFT replication with a single active trusted counter, plus the
Zyzzyva baselines, a deterministic network simulator and a feasibility
analysis of hybrid fault models."""

from .scenario import ConfigError, DelayModel, Fault, Partition, ScenarioConfig, Workload
from .simnet import Simulator, Transcript, run
from .variants import ProtocolVariant, thresholds, variant_thresholds

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DelayModel",
    "Fault",
    "Partition",
    "ProtocolVariant",
    "ScenarioConfig",
    "Simulator",
    "Transcript",
    "Workload",
    "run",
    "thresholds",
    "variant_thresholds",
]
