"""Clearance deficits between agents and against circular obstacles.

Deficits are ``min(0, separation - threshold)`` with threshold
``rho_p + rho_q + margin`` (pairs) or ``r_l + rho_n + margin`` (obstacles).
Array functions accept a leading time axis on the position input.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

ZETA_ZERO = "zeta0"     # pair deficit returns to 0
ZETA_NEG = "zeta-"      # pair deficit leaves 0 (becomes negative)
DELTA_ZERO = "delta0"
DELTA_NEG = "delta-"


def pair_deficit(s_p, s_q, rho_p, rho_q, margin=0.0):
    d = np.linalg.norm(np.asarray(s_p, dtype=float) - np.asarray(s_q, dtype=float), axis=-1)
    return np.minimum(0.0, d - (rho_p + rho_q + margin))


def obstacle_deficit(center, s_n, r_l, rho_n, margin=0.0):
    d = np.linalg.norm(np.asarray(center, dtype=float) - np.asarray(s_n, dtype=float), axis=-1)
    return np.minimum(0.0, d - (r_l + rho_n + margin))


def agent_pairs(N: int) -> list[tuple[int, int]]:
    return list(combinations(range(N), 2))


@dataclass
class ClearanceReport:
    pair_gap: np.ndarray        # (..., n_pairs) signed separation minus threshold
    obstacle_gap: np.ndarray    # (..., L, N)
    pair_dist: np.ndarray       # (..., n_pairs) raw distances
    obstacle_dist: np.ndarray   # (..., L, N)

    @property
    def pair_deficits(self):
        return np.minimum(0.0, self.pair_gap)

    @property
    def obstacle_deficits(self):
        return np.minimum(0.0, self.obstacle_gap)

    @property
    def pair_active(self):
        return self.pair_gap < 0.0

    @property
    def obstacle_active(self):
        return self.obstacle_gap < 0.0


def clearance(positions, scenario) -> ClearanceReport:
    """Signed clearances for positions of shape (..., N, 2)."""
    s = np.asarray(positions, dtype=float)
    lead = s.shape[:-2]
    rho = np.array([a.rho for a in scenario.agents], dtype=float)
    margin = scenario.penalties.margin
    pairs = agent_pairs(scenario.N)
    if pairs:
        p_idx, q_idx = np.array(pairs).T
        pair_dist = np.linalg.norm(s[..., p_idx, :] - s[..., q_idx, :], axis=-1)
        pair_gap = pair_dist - (rho[p_idx] + rho[q_idx] + margin)
    else:
        pair_dist = pair_gap = np.zeros(lead + (0,))
    if scenario.L:
        centers = scenario.obstacle_centers()
        obs_dist = np.linalg.norm(centers[:, None, :] - s[..., None, :, :], axis=-1)     # (..., L, N)
        obs_gap = obs_dist - (scenario.obstacle_radii()[:, None] + rho[None, :] + margin)
    else:
        obs_dist = obs_gap = np.zeros(lead + (0, scenario.N))
    return ClearanceReport(pair_gap, obs_gap, pair_dist, obs_dist)


def _crossings(prev_gap, gap, t_prev, dt, neg_kind, zero_kind, labels):
    events = []
    prev_gap = np.ravel(prev_gap)
    gap = np.ravel(gap)
    for j in np.flatnonzero((prev_gap < 0.0) != (gap < 0.0)):
        frac = prev_gap[j] / (prev_gap[j] - gap[j])
        kind = neg_kind if gap[j] < 0.0 else zero_kind
        events.append((kind, t_prev + frac * dt, labels[j]))
    return events


def penalty_integrands(positions, scenario, previous: ClearanceReport | None = None, t: float = 0.0,
                       dt: float | None = None):
    """Instantaneous J2 and J3 at one time instant.

    Returns ``(J2, J3, events, report)``. When ``previous`` (the report of the
    preceding call, ``dt`` earlier) is given, deficits that switched between
    zero and negative produce events time-stamped by linear interpolation.
    """
    rep = clearance(positions, scenario)
    J2 = float(np.sum(rep.pair_deficits))
    J3 = float(np.sum(rep.obstacle_deficits))
    events = []
    if previous is not None:
        dt = scenario.dt if dt is None else dt
        t_prev = t - dt
        pairs = agent_pairs(scenario.N)
        events += _crossings(previous.pair_gap, rep.pair_gap, t_prev, dt, ZETA_NEG, ZETA_ZERO, pairs)
        obs_labels = [(l, n) for l in range(scenario.L) for n in range(scenario.N)]
        events += _crossings(previous.obstacle_gap, rep.obstacle_gap, t_prev, dt, DELTA_NEG, DELTA_ZERO, obs_labels)
    return J2, J3, events, rep


def series_events(report: ClearanceReport, scenario, dt: float, t0: float = 0.0):
    """Deficit switching events along the leading (time) axis of a report."""
    events = []
    pairs = agent_pairs(scenario.N)
    obs_labels = [(l, n) for l in range(scenario.L) for n in range(scenario.N)]
    K = report.pair_gap.shape[0]
    for gap, labels, neg_kind, zero_kind in (
        (report.pair_gap.reshape(K, -1), pairs, ZETA_NEG, ZETA_ZERO),
        (report.obstacle_gap.reshape(K, -1), obs_labels, DELTA_NEG, DELTA_ZERO),
    ):
        if gap.shape[1] == 0:
            continue
        neg = gap < 0.0
        ks, js = np.nonzero(neg[1:] != neg[:-1])
        for k, j in zip(ks, js):
            a, b = gap[k, j], gap[k + 1, j]
            kind = neg_kind if b < 0.0 else zero_kind
            events.append((kind, t0 + (k + a / (a - b)) * dt, labels[j]))
    return events


def deficit_gradients(positions, pos_partials, scenario, report: ClearanceReport | None = None):
    """Gradients of the instantaneous J2 and J3 w.r.t. the stacked parameter vector.

    ``positions`` has shape (..., N, 2) and ``pos_partials`` is a list with one
    (..., 2, P_n) array per agent. Returns ``(gJ2, gJ3, n_coincident)`` with
    gradients of shape (..., P_total). Inactive deficits (gap >= 0) and
    coincident points contribute zero.
    """
    s = np.asarray(positions, dtype=float)
    rep = report if report is not None else clearance(s, scenario)
    sizes = [dp.shape[-1] for dp in pos_partials]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    lead = s.shape[:-2]
    gJ2 = np.zeros(lead + (offsets[-1],))
    gJ3 = np.zeros(lead + (offsets[-1],))
    coincident = 0

    for j, (p, q) in enumerate(agent_pairs(scenario.N)):
        active = rep.pair_active[..., j]
        if not np.any(active):
            continue
        diff = s[..., p, :] - s[..., q, :]
        dist = rep.pair_dist[..., j]
        ok = active & (dist > 0)
        coincident += int(np.sum(active & (dist == 0)))
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(ok[..., None], diff / dist[..., None], 0.0)    # d dist / d s_p
        gJ2[..., offsets[p]:offsets[p + 1]] += np.einsum("...i,...ij->...j", unit, pos_partials[p])
        gJ2[..., offsets[q]:offsets[q + 1]] -= np.einsum("...i,...ij->...j", unit, pos_partials[q])

    if scenario.L:
        centers = scenario.obstacle_centers()
        for n in range(scenario.N):
            active = rep.obstacle_active[..., :, n]            # (..., L)
            if not np.any(active):
                continue
            diff = s[..., None, n, :] - centers                # s_n - omega_l, (..., L, 2)
            dist = rep.obstacle_dist[..., :, n]
            ok = active & (dist > 0)
            coincident += int(np.sum(active & (dist == 0)))
            with np.errstate(divide="ignore", invalid="ignore"):
                unit = np.where(ok[..., None], diff / dist[..., None], 0.0).sum(axis=-2)
            gJ3[..., offsets[n]:offsets[n + 1]] += np.einsum("...i,...ij->...j", unit, pos_partials[n])
    return gJ2, gJ3, coincident
