"""Shared fixtures.  Full planner runs are expensive, so they are cached per session."""

import functools

import numpy as np
import pytest

from spcrelay import default_scenario, validate
from spcrelay.planner import run_scheme


ACCEPTANCE_LINES = []


def report(number: int, ok: bool, detail: str) -> None:
    """Record one acceptance line; they are printed together at the end of the session."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def cached_run(scenario, scheme):
    return run_scheme(scenario, scheme)


@pytest.fixture(scope="session")
def scenario():
    return default_scenario()


@pytest.fixture(scope="session")
def default_runs(scenario):
    return {k: cached_run(scenario, k) for k in ("initial", "tdfr", "rdft", "jtrd")}


def random_scenario(rng: np.random.Generator, n_slots: int = 20, informative: bool = False):
    """A valid short-mission scenario with random geometry and budgets.

    ``informative`` redraws until the initial plan has positive EAST.
    """
    from spcrelay.planner import initial_feasible
    from spcrelay.secrecy import east

    base = default_scenario()
    for _ in range(1000):
        reach = 0.9 * base.v_xy_max * (n_slots - 1)
        start = rng.uniform(-800, 800, 2)
        ang = rng.uniform(0, 2 * np.pi)
        end = start + rng.uniform(0.2, 1.0) * reach * np.array([np.cos(ang), np.sin(ang)])
        s = base.replace(
            uav_start=(float(start[0]), float(start[1]), float(rng.uniform(60, 120))),
            uav_end=(float(end[0]), float(end[1]), float(rng.uniform(60, 120))),
            eve_est_pos=(float(rng.uniform(-900, 900)), float(rng.uniform(-900, 900)), 0.0),
            eve_uncertainty=float(rng.uniform(0, 50)),
            mission_time=float(n_slots),
            p_tot_alice=float(rng.uniform(0.1, 2.0)),
            p_tot_uav=float(rng.uniform(0.1, 2.0)),
            l_max=int(rng.integers(100, 600)),
        )
        if not validate(s) and (not informative or east(s, initial_feasible(s)) > 0):
            return s
    raise RuntimeError("could not draw a valid scenario")
