import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persmon import kinematics as km
from persmon.kinematics import (DegenerateGeometryError, EllipseParams, FourierParams, Phase, TrajectoryState,
                                param_partials, position, solve_anomaly_accel, solve_rate_for_speed, velocity)
from persmon.scenario import AgentSpec

SPEC = AgentSpec()


def random_ellipse(rng):
    a = rng.uniform(0.5, 3.0)
    return EllipseParams(rng.uniform(0, 10), rng.uniform(0, 5), a, rng.uniform(0.1, a), rng.uniform(0, 2 * np.pi))


def random_fourier(rng, harmonics=2):
    G = harmonics + 1
    return FourierParams(rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3), rng.uniform(0.2, 2, G),
                         rng.uniform(0.2, 2, G), rng.uniform(0, 2 * np.pi, harmonics),
                         rng.uniform(0, 2 * np.pi, harmonics))


DRAWS = {"ellipse": random_ellipse, "fourier": random_fourier}


# --- closed-form examples ----------------------------------------------------------

@pytest.mark.parametrize("params, psi, expected", [
    (EllipseParams(3, 2, 2, 1, 0), 0.0, (5, 2)),
    (EllipseParams(3, 2, 2, 1, 0), math.pi / 2, (3, 3)),
    (EllipseParams(3, 2, 2, 1, math.pi / 2), 0.0, (3, 4)),
])
def test_ellipse_positions(params, psi, expected):
    assert position(params, psi) == pytest.approx(expected, abs=1e-12)


def test_ellipse_velocity_examples():
    assert velocity(EllipseParams(3, 2, 2, 1, 0), 0.0, 1.5) == pytest.approx((0, 1.5), abs=1e-12)
    v = velocity(EllipseParams(0, 0, 1, 1, 0), 0.0, 2.0)
    assert v == pytest.approx((0, 2), abs=1e-12)
    assert np.linalg.norm(v) == pytest.approx(2.0)


@pytest.mark.parametrize("family", ["ellipse", "fourier"])
def test_zero_rate_gives_zero_velocity(family):
    p = DRAWS[family](np.random.default_rng(3))
    assert np.all(velocity(p, 1.234, 0.0) == 0.0)


def test_ellipse_velocity_formula():
    X, Y, a, b, phi = 1.0, 2.0, 2.5, 1.1, 0.7
    p = EllipseParams(X, Y, a, b, phi)
    psi, rate = 0.9, 1.3
    vx = -rate * (a * math.sin(psi) * math.cos(phi) + b * math.cos(psi) * math.sin(phi))
    vy = -rate * (a * math.sin(psi) * math.sin(phi) - b * math.cos(psi) * math.cos(phi))
    assert velocity(p, psi, rate) == pytest.approx((vx, vy), rel=1e-12)


def test_fourier_position_series():
    p = FourierParams(0.2, 0.15, [1.0, 0.5, 0.3], [2.0, 0.7, 0.1], [0.4, 1.0], [0.2, 2.0])
    psi = 1.7
    x = 1.0 + 0.5 * math.sin(2 * math.pi * 0.2 * psi + 0.4) + 0.3 * math.sin(2 * math.pi * 0.4 * psi + 1.0)
    y = 2.0 + 0.7 * math.sin(2 * math.pi * 0.15 * psi + 0.2) + 0.1 * math.sin(2 * math.pi * 0.3 * psi + 2.0)
    assert position(p, psi) == pytest.approx((x, y), rel=1e-12)


def test_solve_rate_examples():
    for phi in (0.0, 1.0, 4.0):
        assert solve_rate_for_speed(EllipseParams(0, 0, 2, 1, phi), 0.0, 1.5) == pytest.approx(1.5)
    assert solve_rate_for_speed(EllipseParams(0, 0, 2, 1, 0), 0.3, 0.0) == 0.0
    for psi in (0.0, 1.0, 2.5):
        assert solve_rate_for_speed(EllipseParams(0, 0, 2, 2, 0), psi, 1.0) == pytest.approx(0.5)


def test_solve_rate_degenerate():
    with pytest.raises(DegenerateGeometryError):
        solve_rate_for_speed(EllipseParams(0, 0, 1, 0.0, 0), 0.0, 1.0)


def test_anomaly_accel_examples():
    circle = EllipseParams(0, 0, 1, 1, 0)
    acc, ok = solve_anomaly_accel(circle, 0.3, 0.0, 1.0)
    assert ok and acc == pytest.approx(1.0)
    # centripetal demand rate^2 = u_max leaves no tangential room
    acc, ok = solve_anomaly_accel(circle, 0.3, 1.0, 1.0)
    assert ok and acc == pytest.approx(0.0, abs=1e-12)
    ell = EllipseParams(1, 1, 2.0, 0.7, 0.4)
    for psi in (0.0, 1.0, 2.0):
        e1 = ell.derivs(psi)[0]
        acc, ok = solve_anomaly_accel(ell, psi, 0.0, 1.0)
        assert ok and acc == pytest.approx(1.0 / np.linalg.norm(e1))


def test_anomaly_accel_vertex_fallback():
    circle = EllipseParams(0, 0, 1, 1, 0)
    acc, ok = solve_anomaly_accel(circle, 0.0, 2.0, 1.0)      # centripetal 4 > u_max
    assert not ok and acc == pytest.approx(0.0, abs=1e-12)


def test_step_from_rest_on_circle():
    new, info = km.step(EllipseParams(0, 0, 1, 1, 0), TrajectoryState(), 0.1, SPEC)
    assert new.psi == pytest.approx(0.005) and new.rate == pytest.approx(0.1)
    assert new.phase is Phase.ACCELERATING and info.crossed_at is None


def test_cruising_circle_keeps_rate():
    spec = AgentSpec(v_max=1.0)
    p = EllipseParams(0, 0, 2, 2, 0)
    state = TrajectoryState(0.0, 0.5, Phase.CRUISING)
    for _ in range(20):
        state, _ = km.step(p, state, 0.01, spec)
        assert state.rate == pytest.approx(0.5, abs=1e-12)
        assert state.phase is Phase.CRUISING


def test_crossing_vmax_inside_step():
    p = EllipseParams(0, 0, 1, 1, 0)
    state = TrajectoryState(0.0, 1.45, Phase.ACCELERATING)
    spec = AgentSpec(u_max=10.0)
    new, info = km.step(p, state, 0.01, spec, t=2.0)
    assert new.phase is Phase.CRUISING
    assert 2.0 < info.crossed_at < 2.01
    assert np.linalg.norm(velocity(p, new.psi, new.rate)) == pytest.approx(1.5, abs=1e-12)


def test_phase_switch_happens_once():
    sched = km.run_schedule(EllipseParams(5, 2.5, 3, 1.5, 0.2), SPEC, 0.01, 1500)
    switches = np.flatnonzero(np.diff(sched.cruising.astype(int)))
    assert len(switches) == 1 and sched.cruising[-1]
    assert sched.crossed_at == pytest.approx(switches[0] * 0.01, abs=0.01)
    assert np.all(sched.rate >= 0)


# --- invariant suite over random draws --------------------------------------------------

def _speed(p, psi, rate):
    return float(np.linalg.norm(velocity(p, psi, rate)))


@pytest.mark.parametrize("family", ["ellipse", "fourier"])
def test_speed_round_trip(family):
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = DRAWS[family](rng)
        psi, c = rng.uniform(0, 2 * np.pi), rng.uniform(0, 3)
        assert abs(_speed(p, psi, solve_rate_for_speed(p, psi, c)) - c) <= 1e-9


@pytest.mark.parametrize("family", ["ellipse", "fourier"])
def test_phase_invariants(family):
    rng = np.random.default_rng(12)
    for _ in range(100):
        p = DRAWS[family](rng)
        sched = km.run_schedule(p, SPEC, 0.01, 300)
        speeds = np.linalg.norm(velocity(p, sched.psi, sched.rate), axis=-1)
        accel = ~sched.cruising
        for k in np.flatnonzero(accel[:-1]):
            acc, ok = solve_anomaly_accel(p, sched.psi[k], sched.rate[k], SPEC.u_max)
            if not ok:
                continue
            a_vec = km.accel_vector(p, sched.psi[k], sched.rate[k], acc)
            assert np.linalg.norm(a_vec) == pytest.approx(SPEC.u_max, rel=1e-6)
            # the chosen root never decelerates along the path
            e1 = p.derivs(sched.psi[k])[0]
            tangential = a_vec @ e1 / np.linalg.norm(e1)
            assert tangential >= -1e-12
            # away from the vertex regime the discrete step keeps that sign; random
            # Fourier curves can have near-cusps that no fixed step resolves
            if family == "ellipse" and accel[k + 1] and tangential >= 0.5 * SPEC.u_max:
                assert speeds[k + 1] > speeds[k]
        assert np.all(np.abs(speeds[sched.cruising] - SPEC.v_max) <= 1e-9)


def _fd_partials(p, psi, rate, h=1e-6):
    theta = p.to_vector()
    ds = np.empty((2, theta.size))
    dv = np.empty((2, theta.size))
    for j in range(theta.size):
        e = np.zeros(theta.size)
        e[j] = h
        hi, lo = p.with_vector(theta + e), p.with_vector(theta - e)
        ds[:, j] = (position(hi, psi) - position(lo, psi)) / (2 * h)
        dv[:, j] = (velocity(hi, psi, rate) - velocity(lo, psi, rate)) / (2 * h)
    return ds, dv


@pytest.mark.parametrize("family", ["ellipse", "fourier"])
def test_param_partials_match_fd(family):
    rng = np.random.default_rng(13)
    for _ in range(100):
        p = DRAWS[family](rng)
        psi, rate = rng.uniform(0, 2 * np.pi), rng.uniform(0.1, 2)
        ds, dv = param_partials(p, psi, rate)
        assert ds.shape == dv.shape == (2, p.n_params)
        fds, fdv = _fd_partials(p, psi, rate)
        for an, fd in ((ds, fds), (dv, fdv)):
            assert np.all(np.abs(an - fd) <= 1e-6 * np.maximum(np.abs(fd), 1.0))


def test_ellipse_partial_entries():
    p = EllipseParams(1, 2, 2.0, 1.0, 0.0)
    ds, dv = param_partials(p, 0.0, 0.8)
    names = p.names()
    assert ds[:, names.index("X")] == pytest.approx([1, 0])
    assert ds[:, names.index("Y")] == pytest.approx([0, 1])
    assert ds[0, names.index("a")] == pytest.approx(1.0)
    assert dv[0, names.index("a")] == pytest.approx(0.0)
    for psi in np.linspace(0, 6, 7):
        ds, _ = param_partials(p, psi, 1.0)
        assert ds[:, 0] == pytest.approx([1, 0])


def test_fourier_partials_exclude_fy():
    p = km.default_fourier(5, 2.5)
    assert p.n_params == 11
    assert "fy" not in p.names()
    ds, dv = param_partials(p, 0.5, 1.0)
    assert ds.shape == (2, 11)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 5), st.floats(0.2, 4), st.floats(0, 2 * np.pi))
def test_circle_degeneration(X, Y, r, phi):
    p = EllipseParams(X, Y, r, r, phi)
    sched = km.run_schedule(p, SPEC, 0.01, 200)
    pts = position(p, sched.psi)
    assert np.all(np.abs(np.linalg.norm(pts - [X, Y], axis=-1) - r) <= 1e-9)


# --- forward sensitivities ------------------------------------------------------------

def test_circle_sensitivity_to_center_is_zero():
    p = EllipseParams(4, 2, 1.5, 1.5, 0.3)
    sched = km.run_schedule(p, SPEC, 0.01, 800, sensitivities=True)
    assert np.all(sched.dpsi[:, :2] == 0) and np.all(sched.drate[:, :2] == 0)


def test_zero_dt_keeps_sensitivity():
    p = EllipseParams(4, 2, 1.5, 1.0, 0.3)
    zero = (np.zeros(5), np.zeros(5))
    dpsi, drate = km.path_sensitivity_step(p, TrajectoryState(), zero, 0.0, SPEC)
    assert np.all(dpsi == 0) and np.all(drate == 0)


def _wrapped_diff(a, b):
    return (a - b + math.pi) % (2 * math.pi) - math.pi


@pytest.mark.parametrize("n_steps", [150, 600])
def test_total_sensitivity_matches_recursion_fd(n_steps):
    # 150 steps stay in the accelerating phase, 600 cross into cruising
    p = EllipseParams(2, 2, 1.2, 0.6, 0.4)
    sched = km.run_schedule(p, SPEC, 0.01, n_steps, sensitivities=True)
    theta = p.to_vector()
    h = 1e-6
    for j in (2, 3):    # a, b
        e = np.zeros(5)
        e[j] = h
        hi = km.run_schedule(p.with_vector(theta + e), SPEC, 0.01, n_steps)
        lo = km.run_schedule(p.with_vector(theta - e), SPEC, 0.01, n_steps)
        fd = _wrapped_diff(hi.psi[-1], lo.psi[-1]) / (2 * h)
        assert sched.dpsi[-1, j] == pytest.approx(fd, rel=1e-4)


# --- parameter plumbing -----------------------------------------------------------------

def test_vector_round_trip_and_projection():
    p = EllipseParams(-1.0, 7.0, 1.0, 2.0, -0.5).project(10, 5)
    assert (p.X, p.Y) == (0.0, 5.0)
    assert p.a == p.b == 1.5
    assert 0 <= p.phi < 2 * np.pi
    assert EllipseParams(1, 1, 1, 0.0, 0).project().b == km.B_MIN
    q = km.default_fourier(5, 2.5)
    assert q.with_vector(q.to_vector()) == q


def test_params_document_round_trip():
    doc = km.params_to_document([km.default_fourier(5, 2), km.default_fourier(3, 1)])
    assert doc["family"] == "fourier" and len(doc["agents"]) == 2
    assert km.params_to_document(km.params_from_document(doc)) == doc
    with pytest.raises(ValueError):
        km.params_from_document({"family": "ellipse", "agents": [{"X": 1}]})
    with pytest.raises(ValueError):
        km.params_to_document([EllipseParams(1, 1, 1, 1, 0), km.default_fourier(1, 1)])
