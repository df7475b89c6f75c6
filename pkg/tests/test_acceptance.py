"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import cached_run, random_scenario, report
from spcrelay import default_scenario
from spcrelay.oracle import GridSpec, grid_optimum_single_slot, sampled_bound_audit
from spcrelay.planner import constraint_residuals, max_residual, run_bsca
from spcrelay.program import CONCAVE_FUNCTIONS, a0, a1, f_lb, tangent_of_concave
from spcrelay.radio import slot_snrs
from spcrelay.secrecy import mc_uplink_rate, uplink_rate_lb


def test_criterion_1_headline_east(default_runs):
    r = default_runs["jtrd"]
    ok = r.converged and 58 <= r.east <= 88 and r.elapsed < 600
    report(1, ok, f"JTRD EAST {r.east:.3f} bits/s (target [58, 88]), converged={r.converged}, "
                  f"{r.trace.iterations} iterations, {r.elapsed:.1f} s")
    assert ok


def test_criterion_2_scheme_ordering(default_runs):
    e = {k: default_runs[k].east for k in ("jtrd", "rdft", "tdfr", "initial")}
    ratio = e["jtrd"] / e["rdft"]
    ok = (e["jtrd"] >= 1.01 * e["rdft"] and e["rdft"] >= e["tdfr"] >= e["initial"]
          and 1.05 <= ratio <= 1.35)
    report(2, ok, f"JTRD {e['jtrd']:.3f} >= RDFT {e['rdft']:.3f} >= TDFR {e['tdfr']:.3f} >= "
                  f"initial {e['initial']:.3f}; JTRD/RDFT = {ratio:.4f} (target [1.05, 1.35])")
    assert ok


def _worst_delta(res):
    d = np.diff(res.trace.east)
    blocks = [v for it in res.trace.deltas for v in it.values()]
    return min([0.0] + list(d) + blocks)


def test_criterion_3_monotone_iterations(default_runs):
    worst = {"default": _worst_delta(default_runs["jtrd"])}
    rng = np.random.default_rng(20240611)
    for k in range(10):
        s = random_scenario(rng, n_slots=12, informative=True)
        worst[f"random{k}"] = _worst_delta(run_bsca(s))
    w = min(worst.values())
    ok = w >= -1e-6
    report(3, ok, f"smallest EAST delta over default + 10 random scenarios: {w:.3e} (bound -1e-6)")
    assert ok


def test_criterion_4_single_slot_oracle():
    s = default_scenario().replace(mission_time=1.0, uav_start=(0.0, 0.0, 60.0), uav_end=(0.0, 0.0, 60.0),
                                   p_tot_alice=1000.0, p_tot_uav=1000.0)
    t0 = time.perf_counter()
    g = grid_optimum_single_slot(s, (0.0, 0.0, 60.0), GridSpec(200, 200))
    t_grid = time.perf_counter() - t0
    t0 = time.perf_counter()
    r = run_bsca(s)
    t_bsca = time.perf_counter() - t0
    rel = abs(r.east - g.east) / g.east
    ok = rel <= 0.02 and t_grid + t_bsca < 120
    report(4, ok, f"BSCA {r.east:.4f} vs grid {g.east:.4f} bits/s, rel diff {rel:.2e} (bound 2e-2), "
                  f"{t_grid + t_bsca:.1f} s")
    assert ok


def test_criterion_5_bound_validity(default_runs):
    s = default_scenario()
    rng = np.random.default_rng(77)
    worst, n_bad = math.inf, 0
    for k in range(1000):
        q = np.r_[rng.uniform(-1000, 1000, 2), rng.uniform(s.h_min, s.h_max)]
        pa = float(rng.uniform(1e-4, s.p_max_alice))
        l = float(rng.integers(1, s.l_max))
        est, se = mc_uplink_rate(s, q, pa, l, 100_000, seed=k)
        lb = uplink_rate_lb(slot_snrs(s, q, pa, 0.0), l, s.eps_r, s.eta_e)
        worst = min(worst, est + 3 * se - lb)
        n_bad += est < lb - 3 * se
    audit = sampled_bound_audit(s, default_runs["jtrd"].dv, 10_000, seed=s.rng_seed)
    ok = n_bad == 0 and audit >= -1e-9
    report(5, ok, f"MC vs bound on 1000 configurations: {n_bad} violations, min(MC + 3 se - bound) = "
                  f"{worst:.3e}; Eve audit margin on JTRD plan {audit:.3e}")
    assert ok


def test_criterion_6_tangency_convexity():
    rng = np.random.default_rng(6)
    dom = math.inf
    for fid, (f, _) in CONCAVE_FUNCTIONS.items():
        for _ in range(1000):
            x0, x = np.exp(rng.uniform(-6, 6, 2))
            k = float(np.exp(rng.uniform(-3, 3)))
            sl, ic = tangent_of_concave(fid, x0, k)
            dom = min(dom, (sl * x + ic - f(x, k)) / max(1.0, abs(f(x, k))))
            assert abs(sl * x0 + ic - f(x0, k)) <= 1e-12 * max(1.0, abs(f(x0, k)))
    fd = 0.0
    for k in (0.01, 1.0, 100.0):
        for x in np.logspace(-4, 4, 161):
            h = 1e-6 * x
            fd = max(fd, abs((a0(x + h, k) - a0(x - h, k)) / (2 * h) - a1(x, k)) / max(1.0, a1(x, k)))
    x, y, x0, y0 = np.exp(rng.uniform(-5, 5, (4, 10_000)))
    flb = float(np.min(1 / (x * y) - f_lb(x, y, x0, y0)))
    g = lambda u: math.log(u / (1 + u))
    curv = max((g(u * (1 + 1e-4)) - 2 * g(u) + g(u * (1 - 1e-4))) / (1e-4 * u) ** 2
               for u in np.logspace(-2, 3, 200))
    ok = dom >= -1e-12 and fd <= 1e-5 and flb >= -1e-12 and curv <= 1e-6
    report(6, ok, f"tangent gap min {dom:.2e}, a1 finite-difference err {fd:.2e}, "
                  f"f_lb gap min {flb:.2e}, log-ratio max curvature {curv:.2e}")
    assert ok


def test_criterion_7_blocklength_sweep(default_runs):
    base = default_scenario()
    e = {}
    for L in (100, 200, 400, 800, 1000):
        e[L] = default_runs["jtrd"].east if L == base.l_max else cached_run(base.replace(l_max=L), "jtrd").east
    Ls = (100, 200, 400, 800)
    mono = all(e[b] >= 0.98 * e[a] for a, b in zip(Ls, Ls[1:]))
    ceiling = e[1000] - e[800] < 0.05 * e[400]
    ok = mono and ceiling
    report(7, ok, "EAST by L_max " + ", ".join(f"{L}: {v:.3f}" for L, v in e.items())
           + f"; 800->1000 increment {e[1000] - e[800]:.3f} (bound {0.05 * e[400]:.3f})")
    assert ok


def test_criterion_8_uncertainty_sweep():
    base = default_scenario()
    e = {d: cached_run(base.replace(eve_uncertainty=float(d)), "jtrd").east for d in (0, 100, 200, 300)}
    ds = sorted(e)
    mono = all(e[b] <= e[a] + 1e-9 for a, b in zip(ds, ds[1:]))
    drop = (e[0] - e[300]) / e[0]
    ok = mono and drop <= 0.25
    report(8, ok, "EAST by Delta_e " + ", ".join(f"{d}: {v:.3f}" for d, v in e.items())
           + f"; total drop {100 * drop:.1f}% (bound 25%)")
    assert ok


def test_criterion_9_feasibility(default_runs):
    s = default_scenario()
    worst_iter, worst_final, c10 = -math.inf, -math.inf, 0.0
    for r in default_runs.values():
        worst_iter = max([worst_iter] + list(r.trace.residuals))
        res = constraint_residuals(s, r.dv, integer=True)
        worst_final = max(worst_final, max_residual(res))
        c10 = max(c10, res["C10"])
    ok = worst_iter <= 1e-8 and worst_final <= 1e-8 and c10 == 0
    report(9, ok, f"max C1-C9 residual over accepted iterates {worst_iter:.2e}, after rounding "
                  f"{worst_final:.2e}, C10 integrality gap {c10:g}")
    assert ok
