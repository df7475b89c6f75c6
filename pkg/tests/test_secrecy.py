import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from spcrelay import default_scenario
from spcrelay.planner import initial_feasible
from spcrelay.radio import SlotSnr, slot_snrs
from spcrelay.secrecy import (downlink_rate_lb, east, mc_uplink_rate, philox_uniforms, slot_rates,
                              slot_throughput, uplink_rate_lb)

LOG2E = math.log2(math.e)


def ref_rate(g, ge, l, eps, eta):
    """Independent closed form using scipy's inverse normal tail."""
    v = lambda x: LOG2E**2 * (1 - (1 + x) ** -2)
    return (math.log2(1 + g) - math.sqrt(v(g) / l) * norm.isf(eps)
            - math.log2(1 + ge) - math.sqrt(v(ge) / l) * norm.isf(eta))


def test_uplink_examples():
    assert uplink_rate_lb(SlotSnr(0, 0, 0, 0), 200, 1e-3, 1e-2) == 0
    r = uplink_rate_lb(SlotSnr(1e5, 0, 0, 0), 200, 1e-3, 1e-2)
    assert r == pytest.approx(16.2944, abs=1e-4)
    assert r == pytest.approx(ref_rate(1e5, 0, 200, 1e-3, 1e-2), abs=1e-10)
    big = uplink_rate_lb(SlotSnr(1e3, 0, 2.0, 0), 1e16, 1e-3, 1e-2)
    assert big == pytest.approx(math.log2(1001 / 3), abs=1e-6)


def test_downlink_examples():
    assert downlink_rate_lb(SlotSnr(0, 5.0, 0, 5.0), 200, 1e-3, 1e-2) == 0
    r = downlink_rate_lb(SlotSnr(0, 1000, 0, 0.1), 200, 1e-3, 1e-2)
    # 9.96722 - 0.31524*0.99999 - 0.13750 - 0.16450*sqrt(V(0.1)), with sqrt(V(0.1)) = 0.60102
    assert r == pytest.approx(9.41561, abs=1e-4)
    assert r == pytest.approx(ref_rate(1000, 0.1, 200, 1e-3, 1e-2), abs=1e-10)
    assert downlink_rate_lb(SlotSnr(0, 2.0, 0, 1.0), 1, 1e-3, 1e-2) == 0


def test_unclipped_can_be_negative():
    assert uplink_rate_lb(SlotSnr(0.1, 0, 0.1, 0), 10, 1e-3, 1e-2, clip=False) < 0


def test_slot_throughput():
    assert slot_throughput(0, 1, 100, 300, 1e-3, 1e-3, 1) == 0
    assert slot_throughput(2, 1, 100, 300, 1e-3, 1e-3, 1) == pytest.approx(199.8, rel=1e-14)
    assert slot_throughput(2, 1, 100, 300, 1e-3, 1e-3, 2) == pytest.approx(99.9, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(g=st.floats(0, 1e6), ge=st.floats(0, 1e3), l1=st.floats(1, 1e4), l2=st.floats(1, 1e4))
def test_monotone_in_blocklength(g, ge, l1, l2):
    lo, hi = min(l1, l2), max(l1, l2)
    snr = SlotSnr(g, g, ge, ge)
    assert uplink_rate_lb(snr, lo, 1e-3, 1e-2) <= uplink_rate_lb(snr, hi, 1e-3, 1e-2) + 1e-12
    assert downlink_rate_lb(snr, lo, 1e-3, 1e-2) <= downlink_rate_lb(snr, hi, 1e-3, 1e-2) + 1e-12


@settings(max_examples=200, deadline=None)
@given(g=st.floats(0, 1e6), e1=st.floats(0, 1e3), e2=st.floats(0, 1e3), l=st.floats(1, 1e3))
def test_monotone_in_eve_snr(g, e1, e2, l):
    lo, hi = min(e1, e2), max(e1, e2)
    assert (uplink_rate_lb(SlotSnr(g, 0, hi, 0), l, 1e-3, 1e-2)
            <= uplink_rate_lb(SlotSnr(g, 0, lo, 0), l, 1e-3, 1e-2) + 1e-12)
    assert (downlink_rate_lb(SlotSnr(0, g, 0, hi), l, 1e-3, 1e-2)
            <= downlink_rate_lb(SlotSnr(0, g, 0, lo), l, 1e-3, 1e-2) + 1e-12)


def test_east_zero_power():
    s = default_scenario()
    dv = initial_feasible(s)
    assert east(s, dv.with_(p_a=0 * dv.p_a, p_r=0 * dv.p_r)) == 0


def test_east_single_slot_reduction():
    s = default_scenario()
    dv = initial_feasible(s)
    j = 37
    one = dv.with_(q=dv.q[j:j + 1], p_a=dv.p_a[j:j + 1], p_r=dv.p_r[j:j + 1], l_u=dv.l_u[j:j + 1],
                   l_d=dv.l_d[j:j + 1], tau=dv.tau[j:j + 1])
    snr = slot_snrs(s, dv.q[j], dv.p_a[j], dv.p_r[j])
    ru = uplink_rate_lb(snr, dv.l_u[j], s.eps_r, s.eta_e)
    rd = downlink_rate_lb(snr, dv.l_d[j], s.eps_b, s.eta_e)
    assert east(s, one) == slot_throughput(ru, rd, dv.l_u[j], dv.l_d[j], s.eps_r, s.eps_b, 1.0)
    assert east(s, dv) == pytest.approx(np.mean(slot_rates(s, dv).b_s), rel=1e-15)


def test_east_deterministic():
    s = default_scenario()
    dv = initial_feasible(s)
    assert east(s, dv) == east(s, dv)


def test_slot_rates_invariants():
    s = default_scenario()
    r = slot_rates(s, initial_feasible(s))
    assert np.all(r.b_s >= 0)
    assert np.all(r.b_s[(r.r_u_lb == 0) | (r.r_d_lb == 0)] == 0)
    assert np.all(r.c_u_inf >= r.r_u_lb) and np.all(r.c_d_inf >= r.r_d_lb)


def test_mc_zero_power():
    s = default_scenario()
    assert mc_uplink_rate(s, (0, 0, 100), 0.0, 200, 1000, 0) == (0.0, 0.0)
    with pytest.raises(ValueError):
        mc_uplink_rate(s, (0, 0, 100), 0.1, 200, 999, 0)


def test_mc_fixed_fading_is_the_bound():
    s = default_scenario()
    q = np.array([-200.0, 100.0, 90.0])
    est, se = mc_uplink_rate(s, q, 0.05, 150, 1000, 3, fixed_fading=True)
    snr = slot_snrs(s, q, 0.05, 0.0)
    assert se == 0
    assert est == uplink_rate_lb(snr, 150, s.eps_r, s.eta_e)


def test_mc_dominates_bound():
    s = default_scenario()
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = np.r_[rng.uniform(-900, 900, 2), rng.uniform(60, 120)]
        pa, l = rng.uniform(0.001, 0.1), rng.uniform(1, 400)
        est, se = mc_uplink_rate(s, q, pa, l, 20_000, int(rng.integers(1 << 30)))
        lb = uplink_rate_lb(slot_snrs(s, q, pa, 0.0), l, s.eps_r, s.eta_e)
        assert est + 3 * se >= lb


def test_mc_deterministic():
    s = default_scenario()
    a = mc_uplink_rate(s, (0, 0, 80), 0.05, 100, 5000, 11, slot=4)
    assert a == mc_uplink_rate(s, (0, 0, 80), 0.05, 100, 5000, 11, slot=4)
    assert a != mc_uplink_rate(s, (0, 0, 80), 0.05, 100, 5000, 12, slot=4)


def test_philox_partition_independent():
    whole = philox_uniforms(9, 2, 0, 4000)
    parts = np.concatenate([philox_uniforms(9, 2, 0, 1000), philox_uniforms(9, 2, 1000, 2000),
                            philox_uniforms(9, 2, 3000, 1000)])
    assert np.array_equal(whole, parts)
    assert not np.array_equal(whole, philox_uniforms(9, 3, 0, 4000))
    with pytest.raises(ValueError):
        philox_uniforms(9, 2, 2, 10)
