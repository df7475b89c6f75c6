"""Brute-force reference answers for small instances.

Both oracles use the same closed-form lower-bound rates as the planner, so a
disagreement points at the optimizer rather than at sampling noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .radio import q_inv, sqrt_dispersion, worst_case_eve_distance
from .scenario import Scenario

MAX_GRID_POINTS = 10**8


@dataclass(frozen=True)
class GridSpec:
    """Uniform power grids on ``[0, p_max]`` and every split ``l_u = 1 .. l_max - 1``."""

    n_p_a: int = 200
    n_p_r: int = 200
    p_a_max: float | None = None   # None: the scenario's p_max_alice
    p_r_max: float | None = None

    def size(self, l_max: int) -> int:
        return self.n_p_a * self.n_p_r * max(int(l_max) - 1, 0)

    def check(self, l_max: int) -> None:
        if self.n_p_a < 1 or self.n_p_r < 1:
            raise ValueError("grid needs at least one point per power axis")
        if self.size(l_max) > MAX_GRID_POINTS:
            raise ValueError(f"grid has {self.size(l_max):,} points, limit is {MAX_GRID_POINTS:,}")


@dataclass(frozen=True)
class GridOptimum:
    east: float
    p_a: float
    p_r: float
    l_u: int
    l_d: int


def _hop_terms(g_main, g_eve, eps, eta):
    """``(capacity gap, dispersion penalty)`` so that rate = cap - pen / sqrt(l)."""
    cap = np.log2(1.0 + g_main) - np.log2(1.0 + g_eve)
    pen = sqrt_dispersion(g_main) * q_inv(eps) + sqrt_dispersion(g_eve) * q_inv(eta)
    return np.asarray(cap, float), np.asarray(pen, float)


def grid_optimum_single_slot(s: Scenario, q_uav, grid: GridSpec | None = None) -> GridOptimum:
    """Exhaustive search over ``(p_a, p_r, l_u)`` for one slot with the UAV parked at ``q_uav``.

    ``l_d = l_max - l_u``; points breaking a power budget are skipped.  Ties
    keep the first point in (l_u, p_a, p_r) scan order.
    """
    grid = grid or GridSpec()
    if s.n_slots != 1:
        raise ValueError("grid oracle needs a single-slot scenario")
    grid.check(s.l_max)
    q = np.asarray(q_uav, float)
    pa = np.linspace(0.0, s.p_max_alice if grid.p_a_max is None else grid.p_a_max, grid.n_p_a)
    pr = np.linspace(0.0, s.p_max_uav if grid.p_r_max is None else grid.p_r_max, grid.n_p_r)
    d_ae = float(worst_case_eve_distance(s, s.q_a))
    d_re = float(worst_case_eve_distance(s, q))
    cap_u, pen_u = _hop_terms(pa * s.rho_r / np.sum((q - s.q_a) ** 2), pa * s.rho_e / d_ae**s.alpha,
                              s.eps_r, s.eta_e)
    cap_d, pen_d = _hop_terms(pr * s.rho_b / np.sum((q - s.q_b) ** 2), pr * s.rho_e / d_re**2,
                              s.eps_b, s.eta_e)
    best, i, j, lu = kernels.grid_best(cap_u, pen_u, pa, cap_d, pen_d, pr, int(s.l_max),
                                       float(s.p_tot_alice), float(s.p_tot_uav), s.eps_r, s.eps_b)
    if i < 0:
        raise ValueError("no grid point satisfies the power budgets")
    return GridOptimum(best / s.slot_duration, float(pa[i]), float(pr[j]), int(lu), int(s.l_max - lu))


# --------------------------------------------------------------------------
# Eve-location audit

def sample_ball(center, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniformly distributed in a 3-D ball."""
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return np.asarray(center, float)[None, :] + d * r[:, None]


def _rate(g_main, g_eve, l, eps, eta):
    return (np.log2(1.0 + g_main) - sqrt_dispersion(g_main) / np.sqrt(l) * q_inv(eps)
            - np.log2(1.0 + g_eve) - sqrt_dispersion(g_eve) / np.sqrt(l) * q_inv(eta))


def rate_margins(s: Scenario, dv, eve_points) -> np.ndarray:
    """Rate at each actual Eve position minus the worst-case bound.

    Shape ``(n_points, n_slots, 2)``; the last axis is (uplink, downlink).
    Rates are unclipped so that the comparison is exact.
    """
    e = np.atleast_2d(np.asarray(eve_points, float))
    q = np.atleast_2d(np.asarray(dv.q, float))
    p_a = np.asarray(dv.p_a, float)[None, :]
    p_r = np.asarray(dv.p_r, float)[None, :]
    l_u = np.asarray(dv.l_u, float)[None, :]
    l_d = np.asarray(dv.l_d, float)[None, :]
    g_r = p_a * s.rho_r / np.sum((q - s.q_a) ** 2, axis=1)[None, :]
    g_b = p_r * s.rho_b / np.sum((q - s.q_b) ** 2, axis=1)[None, :]

    d_ae_lb = float(worst_case_eve_distance(s, s.q_a))
    d_re_lb = worst_case_eve_distance(s, q)[None, :]
    d_ae = np.linalg.norm(e - s.q_a[None, :], axis=1)[:, None]
    d_re = np.linalg.norm(e[:, None, :] - q[None, :, :], axis=2)

    up_lb = _rate(g_r, p_a * s.rho_e / d_ae_lb**s.alpha, l_u, s.eps_r, s.eta_e)
    dn_lb = _rate(g_b, p_r * s.rho_e / d_re_lb**2, l_d, s.eps_b, s.eta_e)
    up = _rate(g_r, p_a * s.rho_e / d_ae**s.alpha, l_u, s.eps_r, s.eta_e)
    dn = _rate(g_b, p_r * s.rho_e / d_re**2, l_d, s.eps_b, s.eta_e)
    return np.stack([up - up_lb, dn - dn_lb], axis=-1)


def sampled_bound_audit(s: Scenario, dv, n_eve_samples: int = 10_000, seed: int = 0) -> float:
    """Worst (smallest) margin between true-position rates and the worst-case bound."""
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = sample_ball(s.q_e, s.eve_uncertainty, n_eve_samples, rng)
    worst = np.inf
    for chunk in np.array_split(pts, max(1, len(pts) // 2000)):
        worst = min(worst, float(np.min(rate_margins(s, dv, chunk))))
    return worst
