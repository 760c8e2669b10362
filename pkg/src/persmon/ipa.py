"""Event-driven propagation of uncertainty sensitivities and gradient assembly.

The only IPA state with jumps is dR_i = dR_i/dTheta. Between events it obeys
d/dt dR_i = -B dP_i/dTheta unless target i is pinned at zero; at a hit-zero
event the row resets to zero and at a leave-zero event it is continuous.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import DELTA_NEG, DELTA_ZERO, ZETA_NEG, ZETA_ZERO
from .uncertainty import XI_PLUS, XI_ZERO

U_ZERO = "u0"

# event kinds in table order; used to break ties between simultaneous events
EVENT_KINDS = (XI_ZERO, XI_PLUS, U_ZERO, ZETA_ZERO, ZETA_NEG, DELTA_ZERO, DELTA_NEG)
_ARITY = {XI_ZERO: 1, XI_PLUS: 1, U_ZERO: 1, ZETA_ZERO: 2, ZETA_NEG: 2, DELTA_ZERO: 2, DELTA_NEG: 2}


@dataclass(frozen=True)
class Event:
    kind: str
    time: float
    indices: tuple

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown event kind {self.kind!r}")
        idx = self.indices if isinstance(self.indices, tuple) else (self.indices,)
        idx = tuple(int(i) for i in idx)
        if len(idx) != _ARITY[self.kind]:
            raise ValueError(f"event {self.kind} takes {_ARITY[self.kind]} indices, got {idx}")
        object.__setattr__(self, "indices", idx)

    def sort_key(self):
        return (self.time, EVENT_KINDS.index(self.kind), self.indices)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "time": self.time, "indices": list(self.indices)}


def sort_events(events):
    return sorted(events, key=Event.sort_key)


@dataclass
class GradientState:
    dR: np.ndarray                  # (M, P_total)
    acc1: np.ndarray = field(default=None)
    acc2: np.ndarray = field(default=None)
    acc3: np.ndarray = field(default=None)

    def __post_init__(self):
        P = self.dR.shape[1]
        for name in ("acc1", "acc2", "acc3"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(P))

    @classmethod
    def zeros(cls, M: int, P: int) -> "GradientState":
        return cls(np.zeros((M, P)))


def grad_joint_prob(dP_ds, dP_dv, ds, dv):
    """Chain rule: dP_i/dTheta over the stacked parameter vector.

    ``dP_ds``/``dP_dv`` have shape (..., M, N, 2); ``ds``/``dv`` are lists with
    one (..., 2, P_n) array per agent. Returns (..., M, P_total).
    """
    blocks = []
    for n in range(len(ds)):
        blocks.append(np.matmul(dP_ds[..., n, :], ds[n]) + np.matmul(dP_dv[..., n, :], dv[n]))
    return np.concatenate(blocks, axis=-1)


def propagate_dR(gs: GradientState, grad_P, pinned, dt: float, B: float) -> GradientState:
    """One Euler step of d/dt dR_i = -B dP_i; rows of pinned targets are held at zero."""
    gs.dR -= (B * dt) * grad_P
    gs.dR[np.asarray(pinned, dtype=bool)] = 0.0
    return gs


def apply_event(gs: GradientState, event: Event) -> GradientState:
    """Reset rule at event times: hit-zero clears the row, everything else is a no-op."""
    if event.kind == XI_ZERO:
        gs.dR[event.indices[0]] = 0.0
    return gs


def accumulate(gs: GradientState, dR, grad_J2, grad_J3, sigma, dt: float) -> GradientState:
    gs.acc1 += dt * (np.asarray(sigma) @ dR)
    gs.acc2 += dt * np.asarray(grad_J2)
    gs.acc3 += dt * np.asarray(grad_J3)
    return gs


def assemble(gs: GradientState, T: float, M2: float, M3: float) -> np.ndarray:
    return (gs.acc1 + M2 * gs.acc2 + M3 * gs.acc3) / T


def propagate_series(grad_P, R, B: float, dt: float) -> np.ndarray:
    """dR over a whole run given grad_P (K, M, P) and the uncertainty trace R (K+1, M).

    Equivalent to alternating ``propagate_dR`` and ``apply_event`` step by
    step: the row of target i is zero whenever R_i = 0 and otherwise integrates
    -B grad_P_i from the last sample at which it was zero.
    """
    K, M, P = grad_P.shape
    C = np.zeros((K + 1, M, P))
    np.cumsum((-B * dt) * grad_P, axis=0, out=C[1:])
    idx = np.where(R == 0.0, np.arange(K + 1)[:, None], 0)
    last_zero = np.maximum.accumulate(idx, axis=0)            # (K+1, M)
    base = np.take_along_axis(C, last_zero[..., None], axis=0)
    dR = C - base
    dR[R == 0.0] = 0.0
    return dR
