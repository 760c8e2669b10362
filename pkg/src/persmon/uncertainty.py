"""Target uncertainty dynamics with the zero floor and its hit/leave events."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

XI_ZERO = "xi0"     # R_i hits 0
XI_PLUS = "xi+"     # R_i leaves 0


@dataclass
class UncertaintyState:
    values: np.ndarray

    @property
    def at_zero(self) -> np.ndarray:
        return self.values == 0.0

    @classmethod
    def initial(cls, R0) -> "UncertaintyState":
        return cls(np.array(R0, dtype=float, copy=True))


def rate(R, P, A, B):
    """dR/dt: zero when pinned at the floor (R = 0, A <= B P), else A - B P."""
    R, P, A = np.asarray(R, dtype=float), np.asarray(P, dtype=float), np.asarray(A, dtype=float)
    pinned = (R == 0.0) & (A <= B * P)
    return np.where(pinned, 0.0, A - B * P)


def step(state: UncertaintyState, rates, dt: float, t: float = 0.0):
    """Explicit Euler step clamped at zero.

    Returns ``(new_state, events)`` with events as ``(kind, time, i)`` tuples.
    A target crossing zero inside the step is stamped at the linearly
    interpolated crossing time; a target leaving zero is stamped at ``t``.
    """
    R = state.values
    rates = np.asarray(rates, dtype=float)
    new = R + rates * dt
    events = []
    leaving = np.flatnonzero((R == 0.0) & (rates > 0.0))
    for i in leaving:
        events.append((XI_PLUS, t, int(i)))
    hitting = np.flatnonzero(new <= 0.0)
    for i in hitting:
        if R[i] > 0.0:
            events.append((XI_ZERO, t + dt * R[i] / (R[i] - new[i]), int(i)))
    new = np.where(new <= 0.0, 0.0, new)
    return UncertaintyState(new), events


def integrate(R0, P, A, B: float, dt: float, t0: float = 0.0):
    """Run ``step`` over a whole detection-probability series.

    ``P`` has shape (K, M) (left-endpoint values). Returns ``(R, events)`` with
    ``R`` of shape (K+1, M); values and events equal those of K successive
    ``step`` calls.
    """
    P = np.asarray(P, dtype=float)
    A = np.asarray(A, dtype=float)
    K, M = P.shape
    incr = (A - B * P) * dt
    R = np.empty((K + 1, M))
    R[0] = R0
    cur = R[0].copy()
    for k in range(K):
        # a pinned target (R = 0, incr <= 0) stays at 0 under the same clamp
        cur = np.maximum(cur + incr[k], 0.0)
        R[k + 1] = cur
    events = []
    ks, iz = np.nonzero((R[:-1] > 0.0) & (R[1:] == 0.0))
    for k, i in zip(ks, iz):
        r = R[k, i]
        events.append((XI_ZERO, t0 + k * dt + dt * r / (r - (r + incr[k, i])), int(i)))
    ks, ip = np.nonzero((R[:-1] == 0.0) & (incr > 0.0))
    for k, i in zip(ks, ip):
        events.append((XI_PLUS, t0 + k * dt, int(i)))
    return R, events
