import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from progs import random_program
from spcrelay.program import (CONCAVE_FUNCTIONS, Affine, ConvexProgram, Lin, LogAffine, LogRatio, LogTerm,
                              NormAffine, QuadOverAffine, a0, a1, atom_slack, check_feasibility, f_lb,
                              f_lb_coefficients, tangent_of_concave)
from spcrelay.solver import CompiledProgram

pos = st.floats(1e-3, 1e3)


def test_a0_examples():
    assert a0(1, 1) == pytest.approx(0.5 * math.log(3), rel=1e-15)
    assert a0(1, 1) == pytest.approx(0.549306, abs=1e-6)
    assert a0(1e-6, 1) == pytest.approx(0.5 * math.log(2.000001e-6), rel=1e-14)
    assert a0(1e-6, 1) == pytest.approx(-6.561181, abs=1e-6)  # 0.5 * (0.693148 - 13.815511)
    for bad in ((0, 1), (1, 0), (-1, 1)):
        with pytest.raises(ValueError):
            a0(*bad)


@settings(max_examples=300, deadline=None)
@given(x=pos, k=pos)
def test_a0_identity(x, k):
    kx = k * x
    ref = math.log(math.sqrt(1 - (1 + kx) ** -2)) + math.log1p(kx)
    assert a0(x, k) == pytest.approx(ref, abs=1e-9)


def test_a1_examples():
    assert a1(1, 1) == pytest.approx(2 / 3, rel=1e-15)
    h = 1e-6
    assert (a0(1 + h, 1) - a0(1 - h, 1)) / (2 * h) == pytest.approx(a1(1, 1), abs=1e-6)
    assert a1(1e6, 1) == pytest.approx(1e-6, rel=1e-5)
    with pytest.raises(ValueError):
        a1(0, 1)


def test_a1_is_derivative_of_a0():
    worst = 0.0
    for k in (0.01, 1.0, 100.0):
        for x in np.logspace(-4, 4, 161):
            h = 1e-6 * x
            fd = (a0(x + h, k) - a0(x - h, k)) / (2 * h)
            worst = max(worst, abs(fd - a1(x, k)) / max(1.0, abs(a1(x, k))))
    assert worst <= 1e-5


def test_f_lb_examples():
    assert f_lb(3.0, 0.5, 3.0, 0.5) == pytest.approx(1 / 1.5, rel=1e-15)
    assert f_lb(2, 2, 1, 1) == -1
    assert 1 / (2 * 2) >= f_lb(2, 2, 1, 1)
    with pytest.raises(ValueError):
        f_lb(1, 1, 0, 1)
    cx, cy, c0 = f_lb_coefficients(2.0, 3.0)
    assert cx * 5 + cy * 7 + c0 == pytest.approx(f_lb(5.0, 7.0, 2.0, 3.0), rel=1e-14)


def test_f_lb_global_lower_bound():
    rng = np.random.default_rng(0)
    x, y, x0, y0 = np.exp(rng.uniform(-5, 5, (4, 10_000)))
    assert np.all(f_lb(x, y, x0, y0) <= 1 / (x * y) * (1 + 1e-12))


def test_tangent_examples():
    assert tangent_of_concave("sqrt", 100.0) == (0.05, 5.0)
    k2, x0 = 0.7, 0.3
    k6, k7 = tangent_of_concave("log1p_kx", x0, k2)
    assert k6 == pytest.approx(k2 / (1 + k2 * x0), rel=1e-15)
    assert k7 == pytest.approx(math.log1p(k2 * x0) - k6 * x0, rel=1e-15)
    with pytest.raises(ValueError):
        tangent_of_concave("sqrt", 0.0)
    with pytest.raises(ValueError):
        tangent_of_concave("cube", 1.0)


@pytest.mark.parametrize("fid", sorted(CONCAVE_FUNCTIONS))
def test_tangent_dominance(fid):
    rng = np.random.default_rng(hash(fid) % 2**32)
    f = CONCAVE_FUNCTIONS[fid][0]
    for _ in range(1000):
        x0, x = np.exp(rng.uniform(-6, 6, 2))
        k = float(np.exp(rng.uniform(-3, 3)))
        sl, ic = tangent_of_concave(fid, x0, k)
        assert sl * x0 + ic == pytest.approx(f(x0, k), abs=1e-12 * max(1, abs(f(x0, k))))
        assert sl * x + ic >= f(x, k) - 1e-12 * max(1.0, abs(f(x, k)))


def test_log_ratio_concave():
    h = 1e-4
    g = lambda u: math.log(u / (1 + u))
    for u in np.logspace(-2, 3, 200):
        hh = h * u
        assert (g(u + hh) - 2 * g(u) + g(u - hh)) / hh**2 <= 1e-6


def test_atom_slack_values():
    x = [2.0, 3.0, 0.5]
    assert atom_slack(Affine({0: 1, 1: 1}, 4.0, "<="), x) == -1.0
    assert atom_slack(Affine({0: 1}, 1.0, ">="), x) == 1.0
    assert atom_slack(Affine({0: 1}, 2.5, "=="), x) == -0.5
    assert atom_slack(NormAffine((Lin({0: 1.0}), Lin({1: 1.0})), Lin({}, 5.0)), x) == pytest.approx(5 - math.sqrt(13))
    assert atom_slack(QuadOverAffine((Lin({2: 1.0}),), Lin({0: 1.0}), Lin({1: 1.0})), x) == 6 - 0.25
    assert atom_slack(LogRatio(2, Lin({}, 1.0)), x) == pytest.approx(1 + math.log(0.5 / 1.5))
    assert atom_slack(LogAffine((LogTerm(1.0, Lin({0: -1.0}, 1.0)),)), x) == -math.inf


def test_check_atom_rejects_bad_data():
    p = ConvexProgram()
    i = p.add_var("x", 0, 1)
    with pytest.raises(ValueError):
        p.add(Affine({i: math.nan}, 1.0))
    with pytest.raises(ValueError):
        p.add(LogAffine((LogTerm(-1.0, Lin({i: 1.0}, 1.0)),)))
    with pytest.raises(ValueError):
        p.add(Affine({i: 1.0}, 1.0, "<"))
    with pytest.raises(ValueError):
        p.add_var("y", 2, 1)


def _all_atoms_program(rng):
    p = ConvexProgram()
    idx = [p.add_var(f"x{i}", warm=float(rng.uniform(0.5, 2))) for i in range(5)]
    lin = lambda: Lin({i: float(rng.normal()) for i in idx[:3]}, float(rng.normal()))
    poslin = lambda: Lin({i: float(rng.uniform(0.1, 1)) for i in idx[:3]}, float(rng.uniform(0.1, 1)))
    p.add(Affine({i: float(rng.normal()) for i in idx}, float(rng.normal()), "<=", "a1"))
    p.add(Affine({i: float(rng.normal()) for i in idx}, float(rng.normal()), ">=", "a2"))
    p.add(Affine({idx[4]: 1.0}, 1.0, "==", "eq"))
    p.add(LogAffine((LogTerm(0.7, poslin()), LogTerm(1.3, poslin())), lin(), ((0.4, idx[3]),), "la"))
    p.add(LogRatio(idx[3], lin(), 2.0, "lr"))
    p.add(QuadOverAffine((lin(), lin()), poslin(), poslin(), "q"))
    p.add(NormAffine((lin(), lin(), lin()), lin(), "n"))
    return p


def test_compiled_slacks_match_dense_evaluator():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = _all_atoms_program(rng)
        cp = CompiledProgram(p)
        for _ in range(25):
            x = rng.uniform(0.01, 3, p.n)
            dense = np.array([atom_slack(a, x) for a in p.atoms])
            assert np.allclose(cp.slacks(x), dense, rtol=0, atol=1e-10 * max(1.0, np.max(np.abs(dense))))


def test_compiled_slacks_on_random_programs():
    rng = np.random.default_rng(4)
    for _ in range(30):
        p, _ = random_program(rng)
        cp = CompiledProgram(p)
        x = p.warm_start() + rng.normal(scale=0.01, size=p.n)
        dense = np.array([atom_slack(a, x) for a in p.atoms])
        assert np.allclose(cp.slacks(x), dense, rtol=0, atol=1e-10)


def test_dump_is_stable():
    rng = np.random.default_rng(8)
    p = _all_atoms_program(rng)
    text = p.dump()
    assert text == _all_atoms_program(np.random.default_rng(8)).dump()
    for kind in ("AFFINE[a1]", "LOG_AFFINE[la]", "LOG_RATIO[lr]", "QUAD_OVER_AFFINE[q]", "NORM_AFFINE[n]"):
        assert kind in text
    assert text.startswith("variables 5\n")


def test_check_feasibility_breakdown():
    p = ConvexProgram()
    i = p.add_var("x", 0.0, 1.0, warm=0.5)
    j = p.add_var("y", warm=0.0)
    p.add(Affine({i: 1.0, j: 1.0}, 2.0, "<=", "sum"))
    p.add(NormAffine((Lin({i: 1.0}),), Lin({j: 1.0}, 1.0), "cone"))
    worst, rows = check_feasibility(p, [0.5, 0.0])
    assert worst < 0
    worst, rows = check_feasibility(p, [0.5, 1.7])
    bad = [r for r in rows if r[2] > 0]
    assert [r[1] for r in bad] == ["sum"] and worst == pytest.approx(0.2)
    worst, rows = check_feasibility(p, [1.5, 0.0])
    assert {r[1] for r in rows if r[2] > 0} == {"x", "cone"}
    assert ("BOUND", "x", pytest.approx(0.5)) in rows
