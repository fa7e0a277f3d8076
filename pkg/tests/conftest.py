import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from magpitch.actuation import ActuationMode, build_table, default_scene
from magpitch.harness import scenario_capsule
from magpitch.params import CapsuleParams

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture(scope="session")
def diag_table(scene):
    return build_table(ActuationMode.DIAGONAL, scene=scene)


@pytest.fixture(scope="session")
def vert_table(scene):
    return build_table(ActuationMode.VERTICAL, scene=scene)


@pytest.fixture(scope="session")
def capsule():
    """Physical capsule defaults (solid-cylinder inertia)."""
    return CapsuleParams()


@pytest.fixture(scope="session")
def loop_capsule():
    """Capsule parameters the closed-loop harness runs with."""
    return scenario_capsule()


@pytest.fixture(scope="session")
def loop_table(diag_table):
    from magpitch.harness import SCENARIO_ALPHA

    return diag_table.with_alpha(SCENARIO_ALPHA)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SWEEP_SEEDS = range(10)


def _record(cfg):
    """Run one scenario and keep what the acceptance checks need (logs are large)."""
    import time

    from magpitch.harness import run_scenario

    start = time.perf_counter()
    log, summary = run_scenario(cfg)
    wall = time.perf_counter() - start
    ticks = log.control_ticks()
    u = log.u_cmd[ticks]
    u_before = log.u_cmd[ticks - 1]
    return {
        "settling": summary.settling_time,
        "overshoot": summary.peak_overshoot,
        "wall": wall,
        "n_records": len(log),
        "max_abs_u": float(np.max(np.abs(u))),
        "max_slew": float(np.max(np.abs(u - u_before))),
        "qp_max_iter": summary.qp_max_iter_count,
    }


@pytest.fixture(scope="session")
def scenario_sweep():
    """Every acceptance scenario under default configuration.

    Keys are ``(maneuver, strategy, seed)``. The on-off baseline ignores the
    sensors, so it is run once per maneuver (seed 0).
    """
    from magpitch.harness import Maneuver, ScenarioConfig, Strategy

    results = {}
    for maneuver in Maneuver:
        results[(maneuver, Strategy.ONOFF, 0)] = _record(ScenarioConfig(maneuver=maneuver, strategy=Strategy.ONOFF))
        for strategy in (Strategy.MPC_CAM30, Strategy.MPC_CAM5, Strategy.MPC_FUSION1):
            for seed in SWEEP_SEEDS:
                cfg = ScenarioConfig(maneuver=maneuver, strategy=strategy, rng_seed=seed)
                results[(maneuver, strategy, seed)] = _record(cfg)
    return results
