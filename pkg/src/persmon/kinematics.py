"""Parametric closed trajectories and the constrained motion along them.

An agent moves along a curve s(psi) parameterized by an anomaly psi. Writing
e1 = ds/dpsi and e2 = d2s/dpsi2, velocity is psi_dot * e1 and acceleration is
psi_ddot * e1 + psi_dot**2 * e2. Agents start at rest at psi = 0, accelerate
with |acceleration| = u_max until the speed reaches v_max, then cruise at
v_max for the rest of the horizon.

Curve evaluations (``point``, ``derivs``, ``partials``) broadcast over arrays
of psi; ``frame`` is a scalar fast path used by the stepping loop.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

B_MIN = 1e-3       # minor-axis floor
G_FLOOR = 1e-12    # floor on |ds/dpsi|^2


def wrap_angle(x: float) -> float:
    """x mod 2*pi in [0, 2*pi); tiny negatives would otherwise round up to 2*pi."""
    w = x % TWO_PI
    return 0.0 if w >= TWO_PI else w


class DegenerateGeometryError(ArithmeticError):
    """The curve has (numerically) zero tangent at the current anomaly."""


# ---------------------------------------------------------------------------
# trajectory families

@dataclass(frozen=True)
class EllipseParams:
    X: float
    Y: float
    a: float
    b: float
    phi: float

    family = "ellipse"

    @property
    def n_params(self) -> int:
        return 5

    def names(self) -> list[str]:
        return ["X", "Y", "a", "b", "phi"]

    def to_vector(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.a, self.b, self.phi], dtype=float)

    def with_vector(self, vec) -> "EllipseParams":
        X, Y, a, b, phi = (float(v) for v in vec)
        return EllipseParams(X, Y, a, b, phi)

    def to_dict(self) -> dict:
        return {"X": self.X, "Y": self.Y, "a": self.a, "b": self.b, "phi": self.phi}

    def project(self, L1: float | None = None, L2: float | None = None) -> "EllipseParams":
        """Return the nearest parameters satisfying the family invariants."""
        X, Y = self.X, self.Y
        if L1 is not None:
            X = min(max(X, 0.0), L1)
        if L2 is not None:
            Y = min(max(Y, 0.0), L2)
        a, b = self.a, self.b
        if b > a:
            # Euclidean projection onto the half-plane a >= b
            a = b = 0.5 * (a + b)
        a, b = max(a, B_MIN), max(b, B_MIN)
        return EllipseParams(X, Y, a, b, wrap_angle(self.phi))

    def _rot(self):
        return math.cos(self.phi), math.sin(self.phi)

    def point(self, psi):
        psi = np.asarray(psi, dtype=float)
        c, s = self._rot()
        u, w = self.a * np.cos(psi), self.b * np.sin(psi)
        return np.stack([self.X + c * u - s * w, self.Y + s * u + c * w], axis=-1)

    def derivs(self, psi):
        """(e1, e2, e3): first three psi-derivatives of the curve, shape (..., 2)."""
        psi = np.asarray(psi, dtype=float)
        c, s = self._rot()
        cp, sp = np.cos(psi), np.sin(psi)
        out = []
        for u, w in ((-self.a * sp, self.b * cp), (-self.a * cp, -self.b * sp), (self.a * sp, -self.b * cp)):
            out.append(np.stack([c * u - s * w, s * u + c * w], axis=-1))
        return tuple(out)

    def frame(self, psi: float):
        c, s = self._rot()
        cp, sp = math.cos(psi), math.sin(psi)
        u1, w1 = -self.a * sp, self.b * cp
        u2, w2 = -self.a * cp, -self.b * sp
        return (c * u1 - s * w1, s * u1 + c * w1, c * u2 - s * w2, s * u2 + c * w2)

    def partials(self, psi):
        """Parameter partials of (s, e1, e2) at fixed psi, each shape (..., 2, 5)."""
        psi = np.asarray(psi, dtype=float)
        c, s = self._rot()
        cp, sp = np.cos(psi), np.sin(psi)
        zero, one = np.zeros_like(psi), np.ones_like(psi)

        def rot(u, w):
            return c * u - s * w, s * u + c * w

        def drot(u, w):
            return -s * u - c * w, c * u - s * w

        blocks = []
        # local coordinates of s, e1, e2 and their a-, b-partials
        for (u, w), (ua, wb) in (
            ((self.a * cp, self.b * sp), (cp, sp)),
            ((-self.a * sp, self.b * cp), (-sp, cp)),
            ((-self.a * cp, -self.b * sp), (-cp, -sp)),
        ):
            base = one if not blocks else zero
            da = rot(ua, zero)
            db = rot(zero, wb)
            dphi = drot(u, w)
            px = np.stack([base, zero, da[0], db[0], dphi[0]], axis=-1)
            py = np.stack([zero, base, da[1], db[1], dphi[1]], axis=-1)
            blocks.append(np.stack([px, py], axis=-2))
        return tuple(blocks)


@dataclass(frozen=True)
class FourierParams:
    """x(psi) = a[0] + sum_g a[g] sin(2 pi g fx psi + phix[g-1]); y likewise with fy, b, phiy.

    ``fy`` is held constant and is not part of the optimization vector.
    """
    fx: float
    fy: float
    a: tuple = field(default=(0.0, 0.0))
    b: tuple = field(default=(0.0, 0.0))
    phix: tuple = field(default=(0.0,))
    phiy: tuple = field(default=(0.0,))

    family = "fourier"

    def __post_init__(self):
        for name in ("a", "b", "phix", "phiy"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if len(self.a) != len(self.phix) + 1 or len(self.b) != len(self.phiy) + 1:
            raise ValueError("need len(a) == len(phix) + 1 and len(b) == len(phiy) + 1")
        if not self.phix or not self.phiy:
            raise ValueError("at least one harmonic per axis is required")

    @property
    def gx(self) -> int:
        return len(self.phix)

    @property
    def gy(self) -> int:
        return len(self.phiy)

    @property
    def n_params(self) -> int:
        return 3 + 2 * self.gx + 2 * self.gy

    def names(self) -> list[str]:
        return (["fx"] + [f"a{g}" for g in range(self.gx + 1)] + [f"b{g}" for g in range(self.gy + 1)]
                + [f"phix{g}" for g in range(1, self.gx + 1)] + [f"phiy{g}" for g in range(1, self.gy + 1)])

    def to_vector(self) -> np.ndarray:
        return np.array([self.fx, *self.a, *self.b, *self.phix, *self.phiy], dtype=float)

    def with_vector(self, vec) -> "FourierParams":
        vec = [float(v) for v in vec]
        gx, gy = self.gx, self.gy
        i = 1
        a = vec[i:i + gx + 1]; i += gx + 1
        b = vec[i:i + gy + 1]; i += gy + 1
        phix = vec[i:i + gx]; i += gx
        phiy = vec[i:i + gy]
        return FourierParams(vec[0], self.fy, a, b, phix, phiy)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "a": list(self.a), "b": list(self.b),
                "phix": list(self.phix), "phiy": list(self.phiy)}

    def project(self, L1: float | None = None, L2: float | None = None) -> "FourierParams":
        a, b = list(self.a), list(self.b)
        if L1 is not None:
            a[0] = min(max(a[0], 0.0), L1)
        if L2 is not None:
            b[0] = min(max(b[0], 0.0), L2)
        return FourierParams(max(self.fx, 1e-6), self.fy, a, b,
                             [wrap_angle(p) for p in self.phix], [wrap_angle(p) for p in self.phiy])

    def _axis(self, psi, f, amp, ph):
        g = np.arange(1, len(ph) + 1, dtype=float)
        w = TWO_PI * f * g                                  # (G,)
        th = np.multiply.outer(psi, w) + np.asarray(ph)      # (..., G)
        return g, w, np.asarray(amp[1:]), np.sin(th), np.cos(th)

    def point(self, psi):
        psi = np.asarray(psi, dtype=float)
        _, _, ax, sx, _ = self._axis(psi, self.fx, self.a, self.phix)
        _, _, ay, sy, _ = self._axis(psi, self.fy, self.b, self.phiy)
        return np.stack([self.a[0] + sx @ ax, self.b[0] + sy @ ay], axis=-1)

    def derivs(self, psi):
        psi = np.asarray(psi, dtype=float)
        _, wx, ax, sx, cx = self._axis(psi, self.fx, self.a, self.phix)
        _, wy, ay, sy, cy = self._axis(psi, self.fy, self.b, self.phiy)
        e1 = np.stack([cx @ (ax * wx), cy @ (ay * wy)], axis=-1)
        e2 = np.stack([-(sx @ (ax * wx ** 2)), -(sy @ (ay * wy ** 2))], axis=-1)
        e3 = np.stack([-(cx @ (ax * wx ** 3)), -(cy @ (ay * wy ** 3))], axis=-1)
        return e1, e2, e3

    def frame(self, psi: float):
        e1x = e1y = e2x = e2y = 0.0
        for g, (amp, ph) in enumerate(zip(self.a[1:], self.phix), start=1):
            w = TWO_PI * self.fx * g
            th = w * psi + ph
            e1x += amp * w * math.cos(th)
            e2x -= amp * w * w * math.sin(th)
        for g, (amp, ph) in enumerate(zip(self.b[1:], self.phiy), start=1):
            w = TWO_PI * self.fy * g
            th = w * psi + ph
            e1y += amp * w * math.cos(th)
            e2y -= amp * w * w * math.sin(th)
        return e1x, e1y, e2x, e2y

    def partials(self, psi):
        psi = np.asarray(psi, dtype=float)
        gx, gy = self.gx, self.gy
        P = self.n_params
        shape = psi.shape + (2, P)
        ds, de1, de2 = np.zeros(shape), np.zeros(shape), np.zeros(shape)
        ia0, ib0 = 1, 2 + gx
        iphx, iphy = 3 + gx + gy, 3 + 2 * gx + gy

        g, w, ax, sx, cx = self._axis(psi, self.fx, self.a, self.phix)
        p = psi[..., None]
        # fx: d(theta)/d(fx) = 2 pi g psi
        ds[..., 0, 0] = (cx * TWO_PI * g * p) @ ax
        de1[..., 0, 0] = (TWO_PI * g * (cx - w * p * sx)) @ ax
        de2[..., 0, 0] = -(TWO_PI * g * w * (2.0 * sx + w * p * cx)) @ ax
        ds[..., 0, ia0] = 1.0
        ds[..., 0, ia0 + 1:ia0 + 1 + gx] = sx
        de1[..., 0, ia0 + 1:ia0 + 1 + gx] = w * cx
        de2[..., 0, ia0 + 1:ia0 + 1 + gx] = -(w ** 2) * sx
        ds[..., 0, iphx:iphx + gx] = ax * cx
        de1[..., 0, iphx:iphx + gx] = -ax * w * sx
        de2[..., 0, iphx:iphx + gx] = -ax * w ** 2 * cx

        _, w, ay, sy, cy = self._axis(psi, self.fy, self.b, self.phiy)
        ds[..., 1, ib0] = 1.0
        ds[..., 1, ib0 + 1:ib0 + 1 + gy] = sy
        de1[..., 1, ib0 + 1:ib0 + 1 + gy] = w * cy
        de2[..., 1, ib0 + 1:ib0 + 1 + gy] = -(w ** 2) * sy
        ds[..., 1, iphy:iphy + gy] = ay * cy
        de1[..., 1, iphy:iphy + gy] = -ay * w * sy
        de2[..., 1, iphy:iphy + gy] = -ay * w ** 2 * cy
        return ds, de1, de2


TrajectoryParams = EllipseParams | FourierParams


def params_from_dict(family: str, d: dict) -> TrajectoryParams:
    if family == "ellipse":
        return EllipseParams(*(float(d[k]) for k in ("X", "Y", "a", "b", "phi")))
    if family == "fourier":
        return FourierParams(float(d["fx"]), float(d["fy"]), d["a"], d["b"], d["phix"], d["phiy"])
    raise ValueError(f"unknown trajectory family {family!r}")


def params_to_document(params) -> dict:
    """``{family, agents: [...]}``; all agents must share one family."""
    params = list(params)
    families = {p.family for p in params}
    if len(families) != 1:
        raise ValueError("all agents must use the same trajectory family")
    return {"family": families.pop(), "agents": [p.to_dict() for p in params]}


def params_from_document(doc) -> list:
    if not isinstance(doc, dict) or set(doc) != {"family", "agents"}:
        raise ValueError("params document needs exactly the keys 'family' and 'agents'")
    if not isinstance(doc["agents"], list) or not doc["agents"]:
        raise ValueError("'agents' must be a non-empty list")
    try:
        return [params_from_dict(doc["family"], d) for d in doc["agents"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed agent entry: {exc}") from exc


def default_fourier(a0: float, b0: float, n_harmonics: int = 2) -> FourierParams:
    f = 1.0 / TWO_PI
    return FourierParams(f, f, [a0] + [1.0] + [0.0] * (n_harmonics - 1), [b0] + [1.0] + [0.0] * (n_harmonics - 1),
                         [0.0] * n_harmonics, [math.pi / 2] + [0.0] * (n_harmonics - 1))


# ---------------------------------------------------------------------------
# kinematic maps

def position(params: TrajectoryParams, psi):
    return params.point(psi)


def velocity(params: TrajectoryParams, psi, rate):
    e1 = params.derivs(psi)[0]
    return np.asarray(rate, dtype=float)[..., None] * e1


def _speed_coeff(params, psi: float) -> float:
    e1x, e1y, _, _ = params.frame(psi)
    return e1x * e1x + e1y * e1y


def solve_rate_for_speed(params: TrajectoryParams, psi: float, speed: float) -> float:
    """Anomaly rate at which the agent moves with the given speed."""
    g = _speed_coeff(params, psi)
    if g < G_FLOOR:
        raise DegenerateGeometryError(f"|ds/dpsi|^2 = {g:.3g} at psi = {psi:.6g}")
    return speed / math.sqrt(g)


def solve_anomaly_accel(params: TrajectoryParams, psi: float, rate: float, u_max: float) -> tuple[float, bool]:
    """Anomaly acceleration giving |acceleration| = u_max with the fastest speed growth.

    Returns ``(psi_ddot, feasible)``. When no real root exists the vertex of
    the quadratic is returned with ``feasible=False``.
    """
    e1x, e1y, e2x, e2y = params.frame(psi)
    g = e1x * e1x + e1y * e1y
    if g < G_FLOOR:
        raise DegenerateGeometryError(f"|ds/dpsi|^2 = {g:.3g} at psi = {psi:.6g}")
    r2 = rate * rate
    q = r2 * (e1x * e2x + e1y * e2y)
    disc = q * q - g * (r2 * r2 * (e2x * e2x + e2y * e2y) - u_max * u_max)
    if disc < 0.0:
        return -q / g, False
    # larger root: speed growth 2*rate*g*psi_ddot + const is increasing in psi_ddot
    return (-q + math.sqrt(disc)) / g, True


class Phase(str, enum.Enum):
    ACCELERATING = "accelerating"
    CRUISING = "cruising"


@dataclass(frozen=True)
class TrajectoryState:
    psi: float = 0.0
    rate: float = 0.0
    phase: Phase = Phase.ACCELERATING


@dataclass
class StepInfo:
    crossed_at: float | None = None     # absolute time of the u0 event
    feasible: bool = True               # False when the vertex root was used
    psi_ddot: float = 0.0


def step(params: TrajectoryParams, state: TrajectoryState, dt: float, spec, t: float = 0.0):
    """Advance the anomaly by one time step.

    Returns ``(new_state, info)``; ``info.crossed_at`` holds the interpolated
    time at which the speed reached ``spec.v_max`` if that happened in this step.
    """
    info = StepInfo()
    psi, rate = state.psi, state.rate
    if state.phase is Phase.CRUISING:
        new_psi = wrap_angle(psi + rate * dt)
        return TrajectoryState(new_psi, solve_rate_for_speed(params, new_psi, spec.v_max), Phase.CRUISING), info

    acc, info.feasible = solve_anomaly_accel(params, psi, rate, spec.u_max)
    info.psi_ddot = acc
    new_psi = wrap_angle(psi + rate * dt + 0.5 * acc * dt * dt)
    new_rate = rate + acc * dt
    g_new = _speed_coeff(params, new_psi)
    speed_new = new_rate * math.sqrt(g_new)
    if speed_new >= spec.v_max:
        speed_old = rate * math.sqrt(_speed_coeff(params, psi))
        frac = (spec.v_max - speed_old) / (speed_new - speed_old) if speed_new > speed_old else 1.0
        info.crossed_at = t + min(max(frac, 0.0), 1.0) * dt
        return TrajectoryState(new_psi, solve_rate_for_speed(params, new_psi, spec.v_max), Phase.CRUISING), info
    return TrajectoryState(new_psi, new_rate, Phase.ACCELERATING), info


def accel_vector(params: TrajectoryParams, psi, rate, psi_ddot):
    """Reconstruct the Cartesian acceleration from the anomaly state."""
    e1, e2, _ = params.derivs(psi)
    rate = np.asarray(rate, dtype=float)[..., None]
    return np.asarray(psi_ddot, dtype=float)[..., None] * e1 + rate ** 2 * e2


def cruise_accel_norm(params: TrajectoryParams, psi: float, rate: float) -> float:
    """|acceleration| while holding constant speed (pure normal component)."""
    e1x, e1y, e2x, e2y = params.frame(psi)
    g = e1x * e1x + e1y * e1y
    k = (e1x * e2x + e1y * e2y) / g
    r2 = rate * rate
    return math.hypot(r2 * (e2x - k * e1x), r2 * (e2y - k * e1y))


def param_partials(params: TrajectoryParams, psi, rate):
    """Partials of position and velocity w.r.t. the parameters at frozen (psi, rate).

    Returns ``(ds, dv)`` with shape (..., 2, P).
    """
    ds, de1, _ = params.partials(psi)
    return ds, np.asarray(rate, dtype=float)[..., None, None] * de1


# ---------------------------------------------------------------------------
# forward sensitivity of the stepping recursion

def _total(params, psi, dpsi):
    """Curve frame and its total parameter derivative given d(psi)/d(theta)."""
    e1, e2, e3 = (np.asarray(e) for e in params.derivs(psi))
    _, de1, de2 = params.partials(psi)
    De1 = de1 + np.outer(e2, dpsi)
    De2 = de2 + np.outer(e3, dpsi)
    return e1, e2, De1, De2


def _rate_sens(params, psi, dpsi, speed):
    e1, _, De1, _ = _total(params, psi, dpsi)
    g = e1 @ e1
    rate = speed / math.sqrt(g)
    return -rate * (e1 @ De1) / g


def _accel_sens(params, psi, rate, dpsi, drate, u_max):
    e1, e2, De1, De2 = _total(params, psi, dpsi)
    acc, feasible = solve_anomaly_accel(params, psi, rate, u_max)
    if feasible:
        avec = acc * e1 + rate * rate * e2
        denom = avec @ e1
        if abs(denom) > 1e-15:
            num = avec @ (acc * De1 + rate * rate * De2) + 2.0 * rate * (avec @ e2) * drate
            return -num / denom
    g = e1 @ e1
    h = e1 @ e2
    Dg = 2.0 * (e1 @ De1)
    Dh = e2 @ De1 + e1 @ De2
    return -(2.0 * rate * h * drate + rate * rate * Dh) / g + rate * rate * h * Dg / (g * g)


def path_sensitivity_step(params: TrajectoryParams, state: TrajectoryState, sens, dt: float, spec,
                          new_state: TrajectoryState | None = None):
    """Propagate (d psi/d theta, d rate/d theta) through one ``step``.

    ``new_state`` may be passed to skip recomputing the step; the phase it
    carries decides whether the rate was re-solved from v_max.
    """
    dpsi, drate = (np.asarray(x, dtype=float) for x in sens)
    if dt == 0:
        return dpsi.copy(), drate.copy()
    if new_state is None:
        new_state, _ = step(params, state, dt, spec)
    if state.phase is Phase.CRUISING:
        new_dpsi = dpsi + drate * dt
        return new_dpsi, _rate_sens(params, new_state.psi, new_dpsi, spec.v_max)
    dacc = _accel_sens(params, state.psi, state.rate, dpsi, drate, spec.u_max)
    new_dpsi = dpsi + drate * dt + 0.5 * dacc * dt * dt
    if new_state.phase is Phase.CRUISING:
        return new_dpsi, _rate_sens(params, new_state.psi, new_dpsi, spec.v_max)
    return new_dpsi, drate + dacc * dt


# ---------------------------------------------------------------------------
# full anomaly schedule

@dataclass
class Schedule:
    """Anomaly trace of one agent on the uniform grid t_k = k*dt, k = 0..K."""
    psi: np.ndarray
    rate: np.ndarray
    cruising: np.ndarray                 # bool per sample
    psi_ddot: np.ndarray                 # used acceleration per sample (0 while cruising)
    crossed_at: float | None = None
    feasibility_warnings: int = 0
    cruise_accel_violations: int = 0
    dpsi: np.ndarray | None = None       # (K+1, P) in total mode
    drate: np.ndarray | None = None


def run_schedule(params: TrajectoryParams, spec, dt: float, n_steps: int, sensitivities: bool = False,
                 state: TrajectoryState | None = None) -> Schedule:
    """Integrate the anomaly recursion from rest over ``n_steps`` steps."""
    state = state or TrajectoryState()
    K = n_steps
    psi = np.empty(K + 1)
    rate = np.empty(K + 1)
    cruising = np.zeros(K + 1, dtype=bool)
    acc = np.zeros(K + 1)
    sched = Schedule(psi, rate, cruising, acc)
    if sensitivities:
        P = params.n_params
        sched.dpsi = np.zeros((K + 1, P))
        sched.drate = np.zeros((K + 1, P))
        sens = (np.zeros(P), np.zeros(P))
    for k in range(K + 1):
        psi[k], rate[k] = state.psi, state.rate
        cruising[k] = state.phase is Phase.CRUISING
        if cruising[k]:
            if cruise_accel_norm(params, state.psi, state.rate) > spec.u_max:
                sched.cruise_accel_violations += 1
        if sensitivities:
            sched.dpsi[k], sched.drate[k] = sens
        if k == K:
            break
        try:
            new_state, info = step(params, state, dt, spec, t=k * dt)
        except DegenerateGeometryError as exc:
            exc.time = k * dt
            raise
        if not cruising[k]:
            acc[k] = info.psi_ddot
            sched.feasibility_warnings += not info.feasible
        if info.crossed_at is not None:
            sched.crossed_at = info.crossed_at
        if sensitivities:
            sens = path_sensitivity_step(params, state, sens, dt, spec, new_state=new_state)
        state = new_state
    return sched
