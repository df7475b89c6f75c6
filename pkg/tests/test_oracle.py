import math

import numpy as np
import pytest

from spcrelay import default_scenario
from spcrelay.oracle import (GridSpec, grid_optimum_single_slot, rate_margins, sample_ball,
                             sampled_bound_audit)
from spcrelay.planner import initial_feasible


def one_slot(**kw):
    return default_scenario().replace(mission_time=1.0, p_tot_alice=1000.0, p_tot_uav=1000.0, **kw)


def symmetric_slot():
    q = np.array([0.0, 0.0, 100.0])
    eve = np.array([-2700.0, 0.0, 0.0])
    d_ae = float(np.linalg.norm(eve - [-700.0, 0.0, 0.0]))
    d_re = float(np.linalg.norm(eve - q))
    s = one_slot(eve_uncertainty=0.0, eve_est_pos=tuple(eve), alpha=2.0 * math.log(d_re) / math.log(d_ae))
    return s, q


def test_zero_budget():
    s = one_slot().replace(p_tot_alice=0.0, p_tot_uav=0.0)
    g = grid_optimum_single_slot(s, (0, 0, 60), GridSpec(20, 20))
    assert g.east == 0 and g.p_a == 0 and g.p_r == 0


def test_symmetric_geometry_splits_evenly():
    s, q = symmetric_slot()
    g = grid_optimum_single_slot(s, q, GridSpec(41, 41))
    assert g.l_u == g.l_d == s.l_max // 2
    assert g.p_a == s.p_max_alice and g.p_r == s.p_max_uav


def test_deterministic():
    s = one_slot()
    a = grid_optimum_single_slot(s, (100, -500, 80), GridSpec(60, 60))
    b = grid_optimum_single_slot(s, (100, -500, 80), GridSpec(60, 60))
    assert a == b


def test_refinement_never_loses():
    s = one_slot(l_max=120)
    q = (300, -200, 100)
    prev = -math.inf
    for n in (6, 11, 21, 41, 81):  # each grid contains the previous one
        g = grid_optimum_single_slot(s, q, GridSpec(n, n))
        assert g.east >= prev
        prev = g.east


def test_budget_respected():
    s = one_slot().replace(p_tot_alice=5.0, p_tot_uav=5.0)
    g = grid_optimum_single_slot(s, (0, 0, 60), GridSpec(50, 50))
    assert g.p_a * g.l_u <= 5.0 and g.p_r * g.l_d <= 5.0
    assert g.l_u + g.l_d == s.l_max


def test_guards():
    with pytest.raises(ValueError):
        grid_optimum_single_slot(default_scenario(), (0, 0, 60))
    with pytest.raises(ValueError):
        GridSpec(10_000, 10_000).check(400)
    with pytest.raises(ValueError):
        GridSpec(0, 10).check(400)


def test_sample_ball_inside():
    rng = np.random.default_rng(0)
    pts = sample_ball([1.0, 2.0, 3.0], 5.0, 5000, rng)
    r = np.linalg.norm(pts - [1.0, 2.0, 3.0], axis=1)
    assert np.all(r <= 5.0 + 1e-12)
    assert np.mean(r**3) == pytest.approx(125 / 2, rel=0.05)  # uniform in volume


def test_audit_exact_without_uncertainty():
    s = default_scenario().replace(eve_uncertainty=0.0)
    assert abs(sampled_bound_audit(s, initial_feasible(s), 2000)) <= 1e-12


def test_surface_point_attains_minimum():
    s = default_scenario().replace(eve_uncertainty=50.0)
    dv = initial_feasible(s)
    j = 40
    one = dv.with_(q=dv.q[j:j + 1], p_a=dv.p_a[j:j + 1], p_r=dv.p_r[j:j + 1], l_u=dv.l_u[j:j + 1],
                   l_d=dv.l_d[j:j + 1], tau=dv.tau[j:j + 1])
    rng = np.random.default_rng(3)
    pts = sample_ball(s.q_e, s.eve_uncertainty, 5000, rng)
    m = rate_margins(s, one, pts)
    toward_uav = s.q_e + s.eve_uncertainty * (dv.q[j] - s.q_e) / np.linalg.norm(dv.q[j] - s.q_e)
    toward_alice = s.q_e + s.eve_uncertainty * (s.q_a - s.q_e) / np.linalg.norm(s.q_a - s.q_e)
    m_surf = rate_margins(s, one, np.vstack([toward_uav, toward_alice]))
    assert abs(m_surf[0, 0, 1]) <= 1e-12 and abs(m_surf[1, 0, 0]) <= 1e-12
    assert np.all(m[:, 0, 1] >= m_surf[0, 0, 1] - 1e-12)
    assert np.all(m[:, 0, 0] >= m_surf[1, 0, 0] - 1e-12)


def test_audit_default_nonnegative():
    s = default_scenario()
    assert sampled_bound_audit(s, initial_feasible(s), 10_000, seed=1) >= 0
