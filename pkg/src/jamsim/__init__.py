"""Simulation and stability analysis of a feedback loop whose control
packets are lost with a probability set by a power-limited jammer."""

from .analysis import Condition, NormContext, certify, max_admissible_v
from .attacks import SleepJamParams, constant_strategy, explicit_strategy, sleep_jam_strategy
from .channel import PHatEnvelope, failure_probability, verify_assumption1, verify_assumption2
from .model import (AttackStrategy, Budget, BudgetKind, ChannelParams, PlantModel,
                    gaussian_disturbance, no_disturbance, uniform_disturbance)
from .sim import CountermeasureParams, SimConfig, monte_carlo_first_moment, simulate_trajectory

__version__ = "0.1.0"

__all__ = [
    "AttackStrategy", "Budget", "BudgetKind", "ChannelParams", "Condition", "CountermeasureParams",
    "NormContext", "PHatEnvelope", "PlantModel", "SimConfig", "SleepJamParams", "certify",
    "constant_strategy", "explicit_strategy", "failure_probability", "gaussian_disturbance",
    "max_admissible_v", "monte_carlo_first_moment", "no_disturbance", "simulate_trajectory",
    "sleep_jam_strategy", "uniform_disturbance", "verify_assumption1", "verify_assumption2",
]
