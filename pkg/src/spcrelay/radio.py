"""Channel gains, SNRs, channel dispersion and Gaussian tail utilities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .scenario import Scenario

LOG2E = math.log2(math.e)
LOG2E_SQ = LOG2E * LOG2E


class DegenerateGeometryError(ValueError):
    """A worst-case Eve distance is not positive (waypoint inside the uncertainty ball)."""


@dataclass(frozen=True)
class LinkBudget:
    """Normalized gains ``rho_j = beta0 / sigma_j^2`` (SNR per watt at 1 m)."""

    rho_r: float
    rho_b: float
    rho_e: float

    @classmethod
    def from_scenario(cls, s: Scenario) -> "LinkBudget":
        return cls(s.rho_r, s.rho_b, s.rho_e)


@dataclass(frozen=True)
class SlotSnr:
    """Per-slot SNRs; fields are scalars or arrays over slots.

    ``gamma_ae_bar`` is the fading-averaged Alice-Eve SNR evaluated at the
    worst-case (shortest) Alice-Eve distance; ``gamma_re_tilde`` is the UAV-Eve
    SNR at the worst-case distance.
    """

    gamma_r: np.ndarray | float
    gamma_b: np.ndarray | float
    gamma_ae_bar: np.ndarray | float
    gamma_re_tilde: np.ndarray | float


def los_gain(dist, beta0: float):
    """Free-space air-to-ground power gain ``beta0 / d^2``."""
    d = np.asarray(dist, dtype=float)
    if np.any(d <= 0):
        raise ValueError("los_gain: distance must be > 0")
    out = beta0 / d**2
    return float(out) if out.ndim == 0 else out


def terrestrial_mean_gain(dist, beta0: float, alpha: float):
    """Mean ground-to-ground gain ``beta0 / d^alpha`` (unit-mean Rayleigh fading averaged out)."""
    if not (2.0 < alpha <= 4.0):
        raise ValueError("terrestrial_mean_gain: alpha must satisfy 2 < alpha <= 4")
    d = np.asarray(dist, dtype=float)
    if np.any(d <= 0):
        raise ValueError("terrestrial_mean_gain: distance must be > 0")
    out = beta0 / d**alpha
    return float(out) if out.ndim == 0 else out


def dispersion(gamma):
    """Channel dispersion ``V(g) = log2(e)^2 * (1 - (1+g)^-2)`` in bits^2."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("dispersion: SNR must be >= 0")
    # -expm1(-2 log1p g) keeps precision for tiny g
    out = LOG2E_SQ * -np.expm1(-2.0 * np.log1p(g))
    return float(out) if out.ndim == 0 else out


def sqrt_dispersion(gamma):
    """``sqrt(V(g))``, used wherever rates subtract the dispersion penalty."""
    return np.sqrt(dispersion(gamma))


def q_func(x: float) -> float:
    """Gaussian tail ``Q(x) = P(Z > x)``."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _rational_seed(p: float) -> float:
    # Abramowitz & Stegun 26.2.23, |error| < 4.5e-4, valid for 0 < p <= 0.5
    t = math.sqrt(-2.0 * math.log(p))
    c0, c1, c2 = 2.515517, 0.802853, 0.010328
    d1, d2, d3 = 1.432788, 0.189269, 0.001308
    return t - (c0 + c1 * t + c2 * t * t) / (1.0 + d1 * t + d2 * t * t + d3 * t**3)


@lru_cache(maxsize=256)
def q_inv(p: float) -> float:
    """Inverse Gaussian tail: ``x`` with ``Q(x) = p``.

    Newton on ``Q`` from a rational seed, kept inside a shrinking bracket and
    falling back to bisection whenever a Newton step leaves it.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError("q_inv: p must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -q_inv(1.0 - p)

    lo, hi = 0.0, 40.0  # Q(lo) = 0.5 >= p > Q(hi)
    x = min(max(_rational_seed(p), lo), hi)
    for _ in range(200):
        fx = q_func(x) - p
        if fx > 0:
            lo = x
        else:
            hi = x
        if abs(fx) <= 1e-17 or hi - lo <= 4e-16 * max(1.0, x):
            break
        step = fx / _phi(x)  # Q'(x) = -phi(x)
        nx = x + step
        if not (lo < nx < hi) or not math.isfinite(nx):
            nx = 0.5 * (lo + hi)
        if abs(nx - x) <= 1e-15 * max(1.0, abs(x)):
            x = nx
            break
        x = nx
    return x


def worst_case_eve_distance(s: Scenario, q) -> np.ndarray | float:
    """``||q - q_e_est|| - Delta_e``: the closest any Eve in the uncertainty ball can be."""
    q = np.asarray(q, dtype=float)
    d = np.linalg.norm(q - s.q_e, axis=-1) - s.eve_uncertainty
    return d


def slot_snrs(s: Scenario, q_uav, p_a, p_r) -> SlotSnr:
    """SNRs for one waypoint (shape (3,)) or a whole trajectory (shape (N, 3))."""
    q = np.asarray(q_uav, dtype=float)
    p_a = np.asarray(p_a, dtype=float)
    p_r = np.asarray(p_r, dtype=float)
    if np.any(q[..., 2] <= 0):
        raise DegenerateGeometryError("UAV waypoint must be strictly above ground")
    if np.any(p_a < 0) or np.any(p_r < 0):
        raise ValueError("slot_snrs: powers must be >= 0")

    d_ae = float(worst_case_eve_distance(s, s.q_a))
    d_re = worst_case_eve_distance(s, q)
    if d_ae <= 0 or np.any(d_re <= 0):
        raise DegenerateGeometryError("worst-case Eve distance must be > 0 (point inside the Eve uncertainty ball)")

    d2_ra = np.sum((q - s.q_a) ** 2, axis=-1)
    d2_rb = np.sum((q - s.q_b) ** 2, axis=-1)
    gamma_r = p_a * s.rho_r / d2_ra
    gamma_b = p_r * s.rho_b / d2_rb
    gamma_ae = p_a * s.rho_e / d_ae**s.alpha
    gamma_re = p_r * s.rho_e / d_re**2
    return SlotSnr(_squeeze(gamma_r), _squeeze(gamma_b), _squeeze(gamma_ae), _squeeze(gamma_re))


def _squeeze(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a
