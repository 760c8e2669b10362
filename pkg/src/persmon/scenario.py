"""Monitoring scenarios: mission space, targets, obstacles, agents, penalties.

Scenarios are frozen dataclasses. ``load_scenario`` parses the JSON document
format and validates every invariant; ``dump_scenario`` is its inverse.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario documents."""


@dataclass(frozen=True)
class MissionSpace:
    L1: float
    L2: float


@dataclass(frozen=True)
class Target:
    x: float
    y: float
    sigma: float = 1.0
    A: float = 1.0
    R0: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    r: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class AgentSpec:
    u_max: float = 1.0
    v_max: float = 1.5
    r_sense: float = 2.0
    beta: float = 5.0
    rho: float = 0.2


@dataclass(frozen=True)
class PenaltyConfig:
    M2: float = -30000.0
    M3: float = -30000.0
    margin: float = 0.02


@dataclass(frozen=True)
class Scenario:
    space: MissionSpace
    targets: tuple[Target, ...]
    obstacles: tuple[Obstacle, ...]
    agents: tuple[AgentSpec, ...]
    penalties: PenaltyConfig = field(default_factory=PenaltyConfig)
    T: float = 40.0
    B: float = 15.0
    dt: float = 0.01

    def __post_init__(self):
        # accept lists from callers, store tuples so the value stays hashable
        for name in ("targets", "obstacles", "agents"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def M(self) -> int:
        return len(self.targets)

    @property
    def N(self) -> int:
        return len(self.agents)

    @property
    def L(self) -> int:
        return len(self.obstacles)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def target_positions(self) -> np.ndarray:
        return np.array([[t.x, t.y] for t in self.targets], dtype=float).reshape(-1, 2)

    def obstacle_centers(self) -> np.ndarray:
        return np.array([[o.x, o.y] for o in self.obstacles], dtype=float).reshape(-1, 2)

    def obstacle_radii(self) -> np.ndarray:
        return np.array([o.r for o in self.obstacles], dtype=float)

    def weights(self) -> np.ndarray:
        return np.array([t.sigma for t in self.targets], dtype=float)

    def growth_rates(self) -> np.ndarray:
        return np.array([t.A for t in self.targets], dtype=float)

    def initial_uncertainty(self) -> np.ndarray:
        return np.array([t.R0 for t in self.targets], dtype=float)

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace
        return replace(self, **changes)


def validate(sc: Scenario) -> Scenario:
    """Check every scenario invariant, raising ScenarioError on the first failure."""
    if not (sc.space.L1 > 0 and sc.space.L2 > 0):
        raise ScenarioError("mission space L1 and L2 must be positive")
    for i, t in enumerate(sc.targets):
        if not t.sigma > 0:
            raise ScenarioError(f"target {i}: sigma must be positive")
        if not t.A > 0:
            raise ScenarioError(f"target {i}: A must be positive")
        if not t.R0 >= 0:
            raise ScenarioError(f"target {i}: R0 must be non-negative")
    for l, o in enumerate(sc.obstacles):
        if not o.r > 0:
            raise ScenarioError(f"obstacle {l}: radius must be positive")
    for n, a in enumerate(sc.agents):
        if not a.u_max > 0:
            raise ScenarioError(f"agent {n}: u_max must be positive")
        if not a.v_max > 0:
            raise ScenarioError(f"agent {n}: v_max must be positive")
        if not a.beta > a.v_max:
            raise ScenarioError(f"agent {n}: beta must exceed v_max")
        if not a.r_sense > 0:
            raise ScenarioError(f"agent {n}: r_sense must be positive")
        if not a.rho > 0:
            raise ScenarioError(f"agent {n}: rho must be positive")
    p = sc.penalties
    if not p.M2 < 0:
        raise ScenarioError("M2 must be negative")
    if not p.M3 < 0:
        raise ScenarioError("M3 must be negative")
    if not p.margin >= 0:
        raise ScenarioError("margin must be non-negative")
    if sc.targets and not sc.B > max(t.A for t in sc.targets):
        raise ScenarioError("B must exceed all A_i")
    if not sc.B > 0:
        raise ScenarioError("B must be positive")
    if not sc.T > 0:
        raise ScenarioError("horizon T must be positive")
    if not sc.dt > 0:
        raise ScenarioError("time step dt must be positive")
    if sc.T / sc.dt < 100:
        raise ScenarioError("T/dt must be at least 100")
    return sc


# ---------------------------------------------------------------------------
# document format

_TOP_KEYS = {"space", "targets", "obstacles", "agents", "penalties", "horizon", "B"}
_KEYS = {
    "space": {"L1", "L2"},
    "target": {"x", "y", "sigma", "A", "R0"},
    "obstacle": {"x", "y", "r"},
    "agent": {"u_max", "v_max", "r_sense", "beta", "rho"},
    "penalties": {"M2", "M3", "margin"},
    "horizon": {"T", "dt"},
}
_REQUIRED = {
    "space": {"L1", "L2"},
    "target": {"x", "y"},
    "obstacle": {"x", "y", "r"},
    "agent": set(),
    "penalties": set(),
    "horizon": {"T"},
}


def _check_keys(obj: Any, kind: str, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(obj) - _KEYS[kind]
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    missing = _REQUIRED[kind] - set(obj)
    if missing:
        raise ScenarioError(f"{where}: missing keys {sorted(missing)}")
    for k, v in obj.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{where}.{k}: expected a number")
    return {k: float(v) for k, v in obj.items()}


def scenario_from_dict(doc: Any) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown top-level keys {sorted(unknown)}")
    for k in ("space", "targets", "agents", "horizon", "B"):
        if k not in doc:
            raise ScenarioError(f"missing top-level key '{k}'")
    for k in ("targets", "obstacles", "agents"):
        if k in doc and not isinstance(doc[k], list):
            raise ScenarioError(f"'{k}' must be a list")
    if isinstance(doc["B"], bool) or not isinstance(doc["B"], (int, float)):
        raise ScenarioError("'B' must be a number")

    space = MissionSpace(**_check_keys(doc["space"], "space", "space"))
    targets = [Target(**_check_keys(t, "target", f"targets[{i}]")) for i, t in enumerate(doc["targets"])]
    obstacles = [Obstacle(**_check_keys(o, "obstacle", f"obstacles[{i}]"))
                 for i, o in enumerate(doc.get("obstacles", []))]
    agents = [AgentSpec(**_check_keys(a, "agent", f"agents[{i}]")) for i, a in enumerate(doc["agents"])]
    penalties = PenaltyConfig(**_check_keys(doc.get("penalties", {}), "penalties", "penalties"))
    horizon = _check_keys(doc["horizon"], "horizon", "horizon")
    sc = Scenario(space=space, targets=targets, obstacles=obstacles, agents=agents,
                  penalties=penalties, T=horizon["T"], dt=horizon.get("dt", 0.01), B=float(doc["B"]))
    return validate(sc)


def load_scenario(text: str) -> Scenario:
    """Parse and validate a JSON scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc
    return scenario_from_dict(doc)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "space": {"L1": sc.space.L1, "L2": sc.space.L2},
        "targets": [{"x": t.x, "y": t.y, "sigma": t.sigma, "A": t.A, "R0": t.R0} for t in sc.targets],
        "obstacles": [{"x": o.x, "y": o.y, "r": o.r} for o in sc.obstacles],
        "agents": [{"u_max": a.u_max, "v_max": a.v_max, "r_sense": a.r_sense, "beta": a.beta, "rho": a.rho}
                   for a in sc.agents],
        "penalties": {"M2": sc.penalties.M2, "M3": sc.penalties.M3, "margin": sc.penalties.margin},
        "horizon": {"T": sc.T, "dt": sc.dt},
        "B": sc.B,
    }


def dump_scenario(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=2)


# ---------------------------------------------------------------------------
# built-in cases

def _grid_targets(heavy=()) -> list[Target]:
    heavy = set(heavy)
    return [Target(float(x), float(y), sigma=2.0 if (x, y) in heavy else 1.0)
            for x in range(11) for y in range(6)]


def builtin_case_a() -> Scenario:
    """One agent, 66 grid targets, two obstacles, T = 40."""
    return validate(Scenario(
        space=MissionSpace(10.0, 5.0),
        targets=_grid_targets(),
        obstacles=[Obstacle(3.0, 3.0, 1.0), Obstacle(9.0, 2.5, 1.0)],
        agents=[AgentSpec()],
        penalties=PenaltyConfig(),
        T=40.0, B=15.0, dt=0.01,
    ))


def builtin_case_b() -> Scenario:
    """Two agents, four heavier targets on x = 5, T = 30."""
    return validate(Scenario(
        space=MissionSpace(10.0, 5.0),
        targets=_grid_targets(heavy=[(5, 1), (5, 2), (5, 3), (5, 4)]),
        obstacles=[Obstacle(3.0, 3.8, 1.0), Obstacle(8.5, 1.5, 1.0)],
        agents=[AgentSpec(), AgentSpec()],
        penalties=PenaltyConfig(),
        T=30.0, B=15.0, dt=0.01,
    ))


BUILTINS = {"case-a": builtin_case_a, "case-b": builtin_case_b}
