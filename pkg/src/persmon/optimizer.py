"""Projected gradient descent over trajectory parameters with multi-start."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import sensing
from .kinematics import TWO_PI, B_MIN, EllipseParams, FourierParams
from .simulator import SimResult, SimulationError, simulate, stacked_vector, unstack_vector

log = logging.getLogger(__name__)

STEP_RULES = ("armijo", "fixed")
CONVERGENCE_HEADER = ["start", "h", "J", "J1", "J2", "J3", "alpha", "grad_norm"]


class AllStartsFailedError(RuntimeError):
    pass


@dataclass
class OptOptions:
    epsilon: float = 0.01
    max_iters: int = 200
    step_rule: str = "armijo"
    alpha: float = 1e-4             # fixed step, or initial trial step for armijo
    shrink: float = 0.5
    c: float = 1e-4
    max_backtracks: int = 30
    starts: int = 1
    seed: int = 0
    grad_mode: str = "paper"
    keep_feasible: bool = True      # reject steps that leave the penalty-free region
    sensing_model: str = sensing.VELOCITY

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        if not 0 < self.shrink < 1:
            raise ValueError("armijo shrink must lie in (0, 1)")
        if not 0 < self.c < 1:
            raise ValueError("armijo c must lie in (0, 1)")
        if not self.alpha > 0:
            raise ValueError("step size must be positive")
        if self.max_iters < 1 or self.starts < 1:
            raise ValueError("max_iters and starts must be at least 1")
        if self.grad_mode not in ("paper", "total"):
            raise ValueError("grad_mode must be 'paper' or 'total'")


@dataclass
class Iterate:
    start: int
    h: int
    J: float
    J1: float
    J2: float
    J3: float
    alpha: float
    grad_norm: float

    def row(self) -> list:
        return [self.start, self.h, *(f"{v:.12g}" for v in (self.J, self.J1, self.J2, self.J3, self.alpha,
                                                             self.grad_norm))]


@dataclass
class StartOutcome:
    index: int
    status: str                     # converged | max-iters | zero-gradient | line-search | failed
    best_params: list | None = None
    best_J: float = math.inf
    iterates: list = field(default_factory=list)
    error: str | None = None


@dataclass
class OptResult:
    best_params: list
    best_J: float
    iterates: list                  # Iterate records of every start, in order
    start_index: int
    final: SimResult
    starts: list = field(default_factory=list)


def _project(params, scenario):
    return [p.project(scenario.space.L1, scenario.space.L2) for p in params]


def _angle_mask(params) -> np.ndarray:
    return np.array([name.startswith("phi") for p in params for name in p.names()])


def _displacement(theta, raw, projected, angles):
    """Actual step taken, ignoring 2*pi wraps of orientation/phase components."""
    fix = projected - raw
    fix[angles] = (fix[angles] + math.pi) % TWO_PI - math.pi
    return raw + fix - theta


def _feasible(res) -> bool:
    return res.J2 == 0.0 and res.J3 == 0.0


def _record(start, h, res, alpha, g):
    return Iterate(start, h, res.J, res.J1, res.J2, res.J3, alpha, float(np.linalg.norm(g)))


def _run_start(scenario, init, options: OptOptions, index: int):
    run = lambda ps: simulate(scenario, ps, options.grad_mode, sensing_model=options.sensing_model)
    out = StartOutcome(index, "failed")
    params = _project(list(init), scenario)
    try:
        res = run(params)
    except SimulationError as exc:
        out.error = str(exc)
        log.warning("start %d: initial point failed: %s", index, exc)
        return out, None
    out.iterates.append(_record(index, 0, res, 0.0, res.grad))
    out.best_params, out.best_J, best_res = params, res.J, res

    for h in range(1, options.max_iters + 1):
        g = res.grad
        gnorm2 = float(g @ g)
        if gnorm2 == 0.0:
            log.warning("start %d: gradient vanished at h=%d (no target sensed); stopping", index, h)
            out.status = "zero-gradient"
            return out, best_res
        theta = stacked_vector(params)
        angles = _angle_mask(params)
        alpha = options.alpha
        accepted = None
        for _ in range(options.max_backtracks + 1 if options.step_rule == "armijo" else 1):
            raw = theta - alpha * g
            cand = _project(unstack_vector(params, raw), scenario)
            step = _displacement(theta, raw, stacked_vector(cand), angles)
            try:
                trial = run(cand)
            except SimulationError as exc:
                log.debug("start %d h=%d alpha=%g: %s", index, h, alpha, exc)
                trial = None
            if options.step_rule == "fixed":
                accepted = trial
                break
            if (trial is not None and trial.J < res.J and trial.J <= res.J + options.c * float(g @ step)
                    and not (options.keep_feasible and _feasible(res) and not _feasible(trial))):
                accepted = trial
                break
            alpha *= options.shrink
        if accepted is None:
            out.status = "line-search" if options.step_rule == "armijo" else "failed"
            if out.status == "failed":
                out.error = f"kinematics failure at iteration {h}"
            log.info("start %d: no acceptable step at h=%d", index, h)
            return out, best_res
        prev_J = res.J
        params, res = cand, accepted
        out.iterates.append(_record(index, h, res, alpha, res.grad))
        if res.J < out.best_J:
            out.best_params, out.best_J, best_res = params, res.J, res
        log.debug("start %d h=%d J=%.6g alpha=%g", index, h, res.J, alpha)
        if abs(res.J - prev_J) < options.epsilon:
            out.status = "converged"
            return out, best_res
    out.status = "max-iters"
    return out, best_res


def optimize(scenario, initial, options: OptOptions | None = None) -> OptResult:
    """Run descent from each initialization and return the best start.

    ``initial`` is a list of initializations, each a list with one parameter
    object per agent. Ties in the final objective go to the lowest start index.
    """
    options = options or OptOptions()
    initial = list(initial)
    if not initial:
        raise ValueError("need at least one initialization")
    outcomes, winner, winner_res = [], None, None
    for index, init in enumerate(initial):
        out, best_res = _run_start(scenario, init, options, index)
        outcomes.append(out)
        log.info("start %d: %s, best J=%.6g after %d iterates", index, out.status, out.best_J,
                 len(out.iterates))
        if best_res is not None and (winner is None or out.best_J < winner.best_J):
            winner, winner_res = out, best_res
    if winner is None:
        raise AllStartsFailedError("every start aborted on a kinematics error: "
                                   + "; ".join(o.error or "?" for o in outcomes))
    iterates = [it for o in outcomes for it in o.iterates]
    return OptResult(winner.best_params, winner.best_J, iterates, winner.index, winner_res, outcomes)


def random_initializations(scenario, family: str, count: int, seed: int = 0, n_harmonics: int = 2) -> list:
    """Deterministic random starting points: ``count`` lists of one parameter set per agent."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    L1, L2 = scenario.space.L1, scenario.space.L2
    f0 = 1.0 / TWO_PI
    inits = []
    for _ in range(count):
        agents = []
        for _n in range(scenario.N):
            if family == "ellipse":
                X, Y = rng.uniform(0, L1), rng.uniform(0, L2)
                hi = max(min(L1, L2) / 2, 0.5)
                a, b = sorted(rng.uniform(0.5, hi, size=2), reverse=True)
                agents.append(EllipseParams(X, Y, a, max(b, B_MIN), rng.uniform(0, TWO_PI)))
            elif family == "fourier":
                G = n_harmonics + 1
                a = rng.uniform(0.2, 2.0, size=G)
                b = rng.uniform(0.2, 2.0, size=G)
                a[0], b[0] = rng.uniform(0, L1), rng.uniform(0, L2)
                agents.append(FourierParams(f0, f0, a, b, rng.uniform(0, TWO_PI, size=G - 1),
                                            rng.uniform(0, TWO_PI, size=G - 1)))
            else:
                raise ValueError(f"unknown family {family!r}")
        inits.append(agents)
    return inits


def write_convergence(result: OptResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONVERGENCE_HEADER)
        for it in result.iterates:
            w.writerow(it.row())
