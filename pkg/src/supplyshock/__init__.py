"""Firm-level supply-chain shock propagation: network building, simulation, lockdown scenarios."""

from supplyshock.analysis import NetStats, SynthParams, compute_stats, generate_synthetic
from supplyshock.engine import (
    ConsumptionTiming,
    DeltaSchedule,
    ModelParams,
    RationingPolicy,
    SimState,
    Trajectory,
    initialize,
    ration,
    run,
    step_day,
)
from supplyshock.network import IOTable, ValuedNetwork, build_network, load_network, save_network
from supplyshock.scenario import LossReport, Scenario, Scope, run_replications

__all__ = [
    "ConsumptionTiming",
    "DeltaSchedule",
    "IOTable",
    "LossReport",
    "NetStats",
    "ModelParams",
    "RationingPolicy",
    "Scenario",
    "Scope",
    "SimState",
    "SynthParams",
    "Trajectory",
    "ValuedNetwork",
    "build_network",
    "compute_stats",
    "generate_synthetic",
    "initialize",
    "load_network",
    "ration",
    "run",
    "run_replications",
    "save_network",
    "step_day",
]

__version__ = "0.1.0"
