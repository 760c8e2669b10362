"""One forward pass over [0, T]: trajectories, sensing, uncertainty, penalties, IPA."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import collision, ipa, kinematics, sensing, uncertainty
from .kinematics import DegenerateGeometryError, Schedule

log = logging.getLogger(__name__)

GRAD_MODES = ("paper", "total", "none")


class SimulationError(RuntimeError):
    """Kinematics failure annotated with the agent index and time."""

    def __init__(self, agent: int, time: float | None, cause: Exception):
        where = f" near t={time:.4g}" if time is not None else ""
        super().__init__(f"agent {agent}{where}: {cause}")
        self.agent = agent
        self.time = time


@dataclass
class SimResult:
    J: float
    J1: float
    J2: float
    J3: float
    grad: np.ndarray | None
    grad_parts: tuple | None            # (dJ1, dJ2, dJ3) already divided by T
    times: np.ndarray
    positions: np.ndarray               # (K+1, N, 2)
    velocities: np.ndarray              # (K+1, N, 2)
    R: np.ndarray                       # (K+1, M)
    P: np.ndarray                       # (K+1, M)
    events: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    schedules: list = field(default_factory=list)
    param_names: list = field(default_factory=list)


def param_offsets(params) -> np.ndarray:
    return np.concatenate([[0], np.cumsum([p.n_params for p in params])]).astype(int)


def stacked_vector(params) -> np.ndarray:
    return np.concatenate([p.to_vector() for p in params])


def unstack_vector(params, vec) -> list:
    off = param_offsets(params)
    return [p.with_vector(vec[off[n]:off[n + 1]]) for n, p in enumerate(params)]


def stacked_names(params) -> list[str]:
    return [f"agent{n}.{name}" for n, p in enumerate(params) for name in p.names()]


def _schedule(params, spec, scenario, n, sensitivities):
    try:
        return kinematics.run_schedule(params, spec, scenario.dt, scenario.n_steps, sensitivities=sensitivities)
    except DegenerateGeometryError as exc:
        raise SimulationError(n, getattr(exc, "time", None), exc) from exc


def simulate(scenario, params, grad_mode: str = "paper", schedules: list[Schedule] | None = None,
             sensing_model: str = sensing.VELOCITY, engine: str = "batch") -> SimResult:
    """Simulate the scenario under per-agent trajectory parameters.

    ``schedules`` freezes the anomaly trace of each agent (as recorded by an
    earlier run) instead of integrating the motion constraints; the frozen
    run differentiates exactly like "paper" mode.

    ``engine="stepwise"`` advances uncertainty and sensitivities one grid step
    at a time through the event handlers; ``"batch"`` (default) computes the
    same recursion over whole arrays and is several times faster.
    """
    if grad_mode not in GRAD_MODES:
        raise ValueError(f"grad_mode must be one of {GRAD_MODES}")
    params = list(params)
    if len(params) != scenario.N:
        raise ValueError(f"expected {scenario.N} parameter sets, got {len(params)}")
    if engine not in ("batch", "stepwise"):
        raise ValueError("engine must be 'batch' or 'stepwise'")
    if schedules is not None and grad_mode == "total":
        raise ValueError("total gradients need the live anomaly recursion, not a frozen schedule")

    K = scenario.n_steps
    dt, T, B = scenario.dt, scenario.T, scenario.B
    M, N = scenario.M, scenario.N
    times = np.arange(K + 1) * dt
    want_grad = grad_mode != "none"

    if schedules is None:
        schedules = [_schedule(p, spec, scenario, n, grad_mode == "total")
                     for n, (p, spec) in enumerate(zip(params, scenario.agents))]

    pos = np.empty((K + 1, N, 2))
    vel = np.empty((K + 1, N, 2))
    ds_list, dv_list = [], []
    for n, (p, sch) in enumerate(zip(params, schedules)):
        pos[:, n] = p.point(sch.psi)
        e1, e2, _ = p.derivs(sch.psi)
        vel[:, n] = sch.rate[:, None] * e1
        if want_grad:
            ds, de1, _ = p.partials(sch.psi)
            dv = sch.rate[:, None, None] * de1
            if grad_mode == "total":
                ds = ds + e1[:, :, None] * sch.dpsi[:, None, :]
                dv = (dv + (sch.rate[:, None] * e2)[:, :, None] * sch.dpsi[:, None, :]
                      + e1[:, :, None] * sch.drate[:, None, :])
            ds_list.append(ds)
            dv_list.append(dv)

    # sensing over the whole grid at once
    targets = scenario.target_positions()
    r_sense = np.array([a.r_sense for a in scenario.agents])
    beta = np.array([a.beta for a in scenario.agents])
    if M:
        p_nm = sensing.detection_prob(pos[:, :, None, :], vel[:, :, None, :], targets[None, None],
                                      r_sense[:, None], beta[:, None], model=sensing_model)   # (K+1, N, M)
        P = sensing.joint_detection(p_nm, axis=1)
    else:
        P = np.zeros((K + 1, 0))

    sizes = [p.n_params for p in params]
    P_total = int(sum(sizes))
    rep = collision.clearance(pos, scenario)
    J2_series = rep.pair_deficits.sum(axis=-1)
    J3_series = rep.obstacle_deficits.reshape(K + 1, -1).sum(axis=-1)

    events = [ipa.Event(ipa.U_ZERO, sch.crossed_at, (n,)) for n, sch in enumerate(schedules)
              if sch.crossed_at is not None]
    events += [ipa.Event(kind, t, idx) for kind, t, idx in collision.series_events(rep, scenario, dt)]

    gs = ipa.GradientState.zeros(M, P_total)
    coincident = 0
    if want_grad:
        if M:
            dpart = sensing.detection_partials(pos[:, None], vel[:, None], targets[None], r_sense, beta,
                                               model=sensing_model)                              # (K+1, M, N, 2)
            grad_P = ipa.grad_joint_prob(dpart.dP_ds, dpart.dP_dv, ds_list, dv_list)          # (K+1, M, P)
        gJ2, gJ3, coincident = collision.deficit_gradients(pos, ds_list, scenario, rep)

    A = scenario.growth_rates()
    sigma = scenario.weights()
    R0 = scenario.initial_uncertainty()
    if engine == "batch":
        R, xi_events = uncertainty.integrate(R0, P[:K], A, B, dt)
        events += [ipa.Event(kind, t, (i,)) for kind, t, i in xi_events]
        if want_grad:
            dR = ipa.propagate_series(grad_P[:K] if M else np.zeros((K, 0, P_total)), R, B, dt)
            gs.dR = dR[K].copy()
            gs.acc1 = dt * np.einsum("i,kip->p", sigma, dR[:K])
            gs.acc2 = dt * gJ2[:K].sum(axis=0)
            gs.acc3 = dt * gJ3[:K].sum(axis=0)
    else:
        R = np.empty((K + 1, M))
        state = uncertainty.UncertaintyState.initial(R0)
        R[0] = state.values
        for k in range(K):
            Rk = state.values
            Pk = P[k]
            rates = uncertainty.rate(Rk, Pk, A, B)
            if want_grad:
                ipa.accumulate(gs, gs.dR, gJ2[k], gJ3[k], sigma, dt)
                pinned = (Rk == 0.0) & (A <= B * Pk)
                ipa.propagate_dR(gs, grad_P[k], pinned, dt, B)
            state, ev = uncertainty.step(state, rates, dt, t=k * dt)
            for kind, t, i in ev:
                e = ipa.Event(kind, t, (i,))
                if want_grad:
                    ipa.apply_event(gs, e)
                events.append(e)
            R[k + 1] = state.values

    J1_series = R @ sigma
    J1 = float(np.sum(J1_series[:K]) * dt / T)
    J2 = float(np.sum(J2_series[:K]) * dt / T)
    J3 = float(np.sum(J3_series[:K]) * dt / T)
    pen = scenario.penalties
    J = J1 + pen.M2 * J2 + pen.M3 * J3

    grad = parts = None
    if want_grad:
        grad = ipa.assemble(gs, T, pen.M2, pen.M3)
        parts = (gs.acc1 / T, gs.acc2 / T, gs.acc3 / T)

    speeds = np.linalg.norm(vel, axis=-1)
    diagnostics = {
        "min_pair_distance": float(rep.pair_dist.min()) if rep.pair_dist.size else math.inf,
        "min_obstacle_distance": float(rep.obstacle_dist.min()) if rep.obstacle_dist.size else math.inf,
        "max_speed": float(speeds.max()) if speeds.size else 0.0,
        "cruise_accel_violations": int(sum(s.cruise_accel_violations for s in schedules)),
        "feasibility_warnings": int(sum(s.feasibility_warnings for s in schedules)),
        "coincident_points": int(coincident),
        "gradient_excited": bool(grad is None or np.any(grad != 0.0)),
    }
    if want_grad and not diagnostics["gradient_excited"]:
        log.debug("all gradient components are zero (no target ever sensed)")
    return SimResult(J=J, J1=J1, J2=J2, J3=J3, grad=grad, grad_parts=parts, times=times,
                     positions=pos, velocities=vel, R=R, P=P, events=ipa.sort_events(events),
                     diagnostics=diagnostics, schedules=schedules, param_names=stacked_names(params))


def objective_from_trace(times, positions, R, scenario) -> float:
    """Recompute J from sampled positions and uncertainties (rectangle rule)."""
    K = len(times) - 1
    rep = collision.clearance(np.asarray(positions), scenario)
    J2 = rep.pair_deficits.sum(axis=-1)
    J3 = rep.obstacle_deficits.reshape(K + 1, -1).sum(axis=-1)
    integrand = np.asarray(R) @ scenario.weights() + scenario.penalties.M2 * J2 + scenario.penalties.M3 * J3
    return float(np.sum(integrand[:K]) * scenario.dt / scenario.T)


# ---------------------------------------------------------------------------
# export

def _fmt(x: float) -> str:
    return f"{x:.9g}"


def trace_header(N: int, M: int) -> list[str]:
    cols = ["t"]
    for n in range(1, N + 1):
        cols += [f"s{n}x", f"s{n}y", f"v{n}x", f"v{n}y"]
    cols += [f"R{i}" for i in range(1, M + 1)]
    return cols


def export_traces(result: SimResult, destination, decimate: int = 1) -> None:
    """Write ``trace.csv`` and ``events.jsonl`` into the destination directory."""
    out = Path(destination)
    out.mkdir(parents=True, exist_ok=True)
    N = result.positions.shape[1] if result.positions.ndim == 3 else 0
    M = result.R.shape[1] if result.R.ndim == 2 else 0
    with open(out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(N, M))
        for k in range(0, len(result.times), max(1, int(decimate))):
            row = [_fmt(result.times[k])]
            for n in range(N):
                row += [_fmt(v) for v in (*result.positions[k, n], *result.velocities[k, n])]
            row += [_fmt(v) for v in result.R[k]]
            w.writerow(row)
    with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
        for e in ipa.sort_events(result.events):
            fh.write(json.dumps(e.to_dict()) + "\n")


def _finite_or_none(v):
    return v if not isinstance(v, float) or math.isfinite(v) else None


def summary(result: SimResult) -> dict:
    """JSON-ready digest; non-finite diagnostics (e.g. no agent pairs) become null."""
    diag = {k: _finite_or_none(v) for k, v in result.diagnostics.items()}
    d = {"J": result.J, "J1": result.J1, "J2": result.J2, "J3": result.J3,
         "diagnostics": diag, "n_events": len(result.events)}
    if result.grad is not None:
        d["grad"] = dict(zip(result.param_names, map(float, result.grad)))
    return d
