"""Velocity-dependent detection model and its derivatives.

All functions broadcast: positions/velocities carry a trailing axis of length
2 and any leading axes (time, agent, target) line up by numpy rules.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VELOCITY = "velocity"
DISTANCE_ONLY = "distance-only"
SENSING_MODELS = (VELOCITY, DISTANCE_ONLY)


def _norm(x):
    return np.sqrt(np.sum(np.square(x), axis=-1))


def detection_prob(agent_pos, agent_vel, target, r_sense, beta, model: str = VELOCITY):
    """Probability that an agent at ``agent_pos`` moving with ``agent_vel`` detects ``target``.

    p = (1 - D/r)(1 - |v|/beta) inside the support D <= r, |v| <= beta, else 0.
    With ``model="distance-only"`` the velocity factor is dropped.
    """
    D = _norm(np.asarray(target, dtype=float) - np.asarray(agent_pos, dtype=float))
    speed = _norm(np.asarray(agent_vel, dtype=float))
    dist_term = 1.0 - D / r_sense
    if model == DISTANCE_ONLY:
        return np.where(D <= r_sense, dist_term, 0.0)
    vel_term = 1.0 - speed / beta
    return np.where((D <= r_sense) & (speed <= beta), dist_term * vel_term, 0.0)


def joint_detection(probs, axis: int = -1):
    """P = 1 - prod(1 - p) over ``axis``."""
    return 1.0 - np.prod(1.0 - np.asarray(probs, dtype=float), axis=axis)


@dataclass
class DetectionPartials:
    dP_ds: np.ndarray   # (..., N, 2)
    dP_dv: np.ndarray   # (..., N, 2)


def detection_partials(agent_pos, agent_vel, target, r_sense, beta, model: str = VELOCITY) -> DetectionPartials:
    """Partials of the joint probability w.r.t. each agent's position and velocity.

    ``agent_pos``/``agent_vel`` have shape (..., N, 2), ``target`` (..., 2) and
    ``r_sense``/``beta`` broadcast against (..., N). Outside the support the
    partials vanish; on the boundary the interior one-sided value is used; at
    D = 0 or |v| = 0 the corresponding gradient is the zero vector.
    """
    pos = np.asarray(agent_pos, dtype=float)
    vel = np.asarray(agent_vel, dtype=float)
    rel = pos - np.asarray(target, dtype=float)[..., None, :]
    D = _norm(rel)
    speed = _norm(vel)
    r_sense = np.asarray(r_sense, dtype=float)
    beta = np.asarray(beta, dtype=float)

    inside = D <= r_sense
    dist_term = 1.0 - D / r_sense
    if model == DISTANCE_ONLY:
        vel_term = np.ones_like(speed)
    else:
        inside = inside & (speed <= beta)
        vel_term = 1.0 - speed / beta
    p = np.where(inside, dist_term * vel_term, 0.0)

    # product of (1 - p_m) over the other agents, without dividing by (1 - p_n)
    q = 1.0 - p
    N = q.shape[-1]
    others = np.empty_like(q)
    for n in range(N):
        others[..., n] = np.prod(np.delete(q, n, axis=-1), axis=-1)

    with np.errstate(divide="ignore", invalid="ignore"):
        unit_rel = np.where((D > 0)[..., None], rel / D[..., None], 0.0)
        unit_vel = np.where((speed > 0)[..., None], vel / speed[..., None], 0.0)
    gate = np.where(inside, others, 0.0)
    dp_ds = -(vel_term / r_sense)[..., None] * unit_rel
    if model == DISTANCE_ONLY:
        dp_dv = np.zeros_like(vel)
    else:
        dp_dv = -(dist_term / beta)[..., None] * unit_vel
    return DetectionPartials(gate[..., None] * dp_ds, gate[..., None] * dp_dv)
