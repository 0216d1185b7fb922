"""Reflected spectrally positive Lévy storage with adjustments at exponential review epochs."""

__version__ = "0.1.0"

from .embedded_chain import (Clearing, ConstantLevel, Custom, Proportional, ReflectAroundB,
                             StationaryDistribution, simulate_chain, stationary_grid)
from .errors import LevyClearError
from .fluctuation import SupremumLaw, TransitionLaw, step_sample, sup_law, transition
from .levy_model import Deterministic, Exponential, LevyModel, Pareto
from .scale_fn import ScaleFunction

__all__ = ["__version__", "LevyModel", "Exponential", "Pareto", "Deterministic", "ScaleFunction",
           "SupremumLaw", "TransitionLaw", "sup_law", "transition", "step_sample", "Clearing",
           "ConstantLevel", "ReflectAroundB", "Proportional", "Custom", "StationaryDistribution",
           "simulate_chain", "stationary_grid", "LevyClearError"]
