import json

import numpy as np
import pytest

from persmon.kinematics import EllipseParams
from persmon.simulator import simulate
from persmon.validation import ACTIVITY_FLOOR, check, fd_gradient
from tests.conftest import make_scenario


def test_zero_targets_zero_fd_both_modes():
    sc = make_scenario(targets=(), T=2.0)
    p = [EllipseParams(5, 2.5, 1.5, 1.0, 0.2)]
    for mode in ("full", "frozen_schedule"):
        assert np.all(fd_gradient(sc, p, mode=mode) == 0.0)


def test_bad_fd_arguments(two_target_scenario, smooth_ellipse):
    with pytest.raises(ValueError):
        fd_gradient(two_target_scenario, [smooth_ellipse], h=0.0)
    with pytest.raises(ValueError):
        fd_gradient(two_target_scenario, [smooth_ellipse], mode="central")


def test_frozen_partials_match_frozen_fd(two_target_scenario, smooth_ellipse):
    rep = check(two_target_scenario, [smooth_ellipse], 1e-3, "paper")
    assert rep.fd_mode == "frozen_schedule"
    assert rep.passed and rep.max_rel_error < 1e-3
    assert all(c.counted for c in rep.components)


def test_total_mode_matches_full_fd(two_target_scenario, smooth_ellipse):
    rep = check(two_target_scenario, [smooth_ellipse], 1e-2, "total")
    assert rep.fd_mode == "full"
    assert rep.passed


def test_two_agents_with_active_obstacle(two_agent_obstacle_scenario, smooth_ellipse, second_ellipse):
    params = [smooth_ellipse, second_ellipse]
    assert simulate(two_agent_obstacle_scenario, params, "none").J3 < 0
    assert check(two_agent_obstacle_scenario, params, 1e-3, "paper").passed
    assert check(two_agent_obstacle_scenario, params, 1e-2, "total").passed


def test_mismatched_modes_expose_missing_chain_term(two_target_scenario, smooth_ellipse):
    rep = check(two_target_scenario, [smooth_ellipse], 1e-2, "paper", fd_mode="full")
    assert not rep.passed
    worst = max((c for c in rep.components if c.counted), key=lambda c: c.rel_error)
    assert worst.name in ("agent0.a", "agent0.b", "agent0.phi")


def test_activity_floor_excludes_inactive_components():
    sc = make_scenario(targets=((9.5, 4.5),), T=2.0)
    rep = check(sc, [EllipseParams(2, 2, 1.0, 0.6, 0.0)], 0.0, "paper")
    assert all(abs(c.numeric) <= ACTIVITY_FLOOR for c in rep.components)
    assert all(c.note == "inactive" and not c.counted for c in rep.components)
    assert rep.passed and rep.max_rel_error == 0.0


def test_report_schema(two_target_scenario, smooth_ellipse):
    rep = check(two_target_scenario.replace(T=3.0), [smooth_ellipse], 1e-3, "paper")
    doc = json.loads(rep.to_json())
    assert [c["name"] for c in doc["components"]] == [f"agent0.{n}" for n in ("X", "Y", "a", "b", "phi")]
    assert {"max_rel_error", "pass", "excluded", "h", "tolerance"} <= set(doc)


def test_richardson_ratio_on_random_configurations():
    sc = make_scenario(T=5.0, R0=2.0)
    rng = np.random.default_rng(11)
    for _ in range(5):
        p = [EllipseParams(rng.uniform(3.5, 5.5), rng.uniform(2, 3), rng.uniform(1.8, 2.5),
                           rng.uniform(0.8, 1.5), rng.uniform(0, 6))]
        big = check(sc, p, 1.0, "paper", h=1e-4)
        small = check(sc, p, 1.0, "paper", h=5e-5)
        keep = [i for i, (cb, cs) in enumerate(zip(big.components, small.components)) if cb.counted and cs.counted]
        assert len(keep) >= 4
        eb = np.linalg.norm([big.components[i].abs_error for i in keep])
        es = np.linalg.norm([small.components[i].abs_error for i in keep])
        assert eb / es >= 3.0


def test_translation_equivariance_for_circle():
    targets = ((3.0, 2.5), (5.0, 2.0))
    shift = np.array([1.25, -0.5])
    sc0 = make_scenario(targets=targets, T=5.0, R0=1.0)
    sc1 = make_scenario(targets=[tuple(np.array(t) + shift) for t in targets], T=5.0, R0=1.0)
    p0 = EllipseParams(4.0, 2.5, 1.5, 1.5, 0.7)
    p1 = EllipseParams(4.0 + shift[0], 2.5 + shift[1], 1.5, 1.5, 0.7)
    for mode in ("paper", "total"):
        g0 = simulate(sc0, [p0], mode).grad
        g1 = simulate(sc1, [p1], mode).grad
        assert np.max(np.abs(g0 - g1)) <= 1e-9 * max(1.0, np.max(np.abs(g0)))
