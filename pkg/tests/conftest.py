import pytest

from persmon.kinematics import EllipseParams
from persmon.scenario import AgentSpec, MissionSpace, Obstacle, Scenario, Target


def make_scenario(targets=((3.0, 2.5), (6.0, 2.5)), obstacles=(), n_agents=1, T=10.0, dt=0.01, R0=0.0, **kw):
    return Scenario(
        space=MissionSpace(10.0, 5.0),
        targets=[Target(x, y, R0=R0) for x, y in targets],
        obstacles=[Obstacle(*o) for o in obstacles],
        agents=[AgentSpec() for _ in range(n_agents)],
        T=T, dt=dt, **kw,
    )


@pytest.fixture
def two_target_scenario():
    """One agent, two targets, no obstacles."""
    return make_scenario()


@pytest.fixture
def two_agent_obstacle_scenario():
    """Two agents, two targets, one obstacle that agent 0 clips."""
    return make_scenario(obstacles=[(4.5, 1.0, 0.5)], n_agents=2)


@pytest.fixture
def smooth_ellipse():
    return EllipseParams(4.5, 2.5, 2.5, 1.2, 0.3)


@pytest.fixture
def second_ellipse():
    return EllipseParams(5.0, 2.8, 1.5, 1.0, 1.0)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one verdict line per acceptance criterion."""
    def record(criterion, ok, detail):
        line = f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
