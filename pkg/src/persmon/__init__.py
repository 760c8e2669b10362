"""Persistent monitoring with second-order agents on parametric closed paths.

Simulation of target uncertainty under velocity-dependent sensing, penalty
terms for agent/obstacle clearance, IPA gradients of the time-averaged cost,
and a projected gradient-descent optimizer over ellipse or Fourier paths.
"""
from .kinematics import EllipseParams, FourierParams
from .optimizer import OptOptions, optimize, random_initializations
from .scenario import Scenario, builtin_case_a, builtin_case_b, load_scenario
from .simulator import SimResult, simulate

__version__ = "0.1.0"

__all__ = [
    "EllipseParams", "FourierParams", "OptOptions", "optimize", "random_initializations",
    "Scenario", "builtin_case_a", "builtin_case_b", "load_scenario", "SimResult", "simulate",
]
