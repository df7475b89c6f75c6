"""Finite-blocklength secrecy rates, their closed-form lower bounds, and EAST."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import kernels
from .radio import (DegenerateGeometryError, SlotSnr, q_inv, slot_snrs, sqrt_dispersion,
                    worst_case_eve_distance)
from .scenario import Scenario

if TYPE_CHECKING:
    from .planner import DecisionVariables


@dataclass(frozen=True)
class SlotRates:
    """Per-slot rates (bits/channel use) and effective secrecy throughput (bits/s)."""

    r_u_lb: np.ndarray
    r_d_lb: np.ndarray
    b_s: np.ndarray
    c_u_inf: np.ndarray
    c_d_inf: np.ndarray


def _rate_lb(g_main, g_eve, l, eps, eta, clip):
    l = np.asarray(l, dtype=float)
    if np.any(l < 1):
        raise ValueError("blocklength must be >= 1")
    sq_l = np.sqrt(l)
    r = (np.log2(1.0 + np.asarray(g_main, float)) - sqrt_dispersion(g_main) / sq_l * q_inv(eps)
         - np.log2(1.0 + np.asarray(g_eve, float)) - sqrt_dispersion(g_eve) / sq_l * q_inv(eta))
    if clip:
        r = np.maximum(r, 0.0)
    return float(r) if np.ndim(r) == 0 else r


def uplink_rate_lb(snr: SlotSnr, l_u, eps_r: float, eta_e: float, clip: bool = True):
    """Worst-case-Eve lower bound on the uplink short-packet secrecy rate.

    With ``clip=False`` the raw closed form is returned (it can be negative);
    the optimizer works with that form.
    """
    return _rate_lb(snr.gamma_r, snr.gamma_ae_bar, l_u, eps_r, eta_e, clip)


def downlink_rate_lb(snr: SlotSnr, l_d, eps_b: float, eta_e: float, clip: bool = True):
    """Worst-case-Eve lower bound on the downlink short-packet secrecy rate."""
    return _rate_lb(snr.gamma_b, snr.gamma_re_tilde, l_d, eps_b, eta_e, clip)


def slot_throughput(r_u, r_d, l_u, l_d, eps_r, eps_b, delta_t):
    """Securely delivered bits per second in one slot: the weaker hop's payload over the slot."""
    up = np.asarray(r_u, float) * l_u * (1.0 - eps_r)
    dn = np.asarray(r_d, float) * l_d * (1.0 - eps_b)
    out = np.maximum(np.minimum(up, dn), 0.0) / delta_t
    return float(out) if np.ndim(out) == 0 else out


def secrecy_capacity(g_main, g_eve):
    """Infinite-blocklength secrecy capacity ``[log2((1+g_main)/(1+g_eve))]_+``."""
    c = np.maximum(np.log2(1.0 + np.asarray(g_main, float)) - np.log2(1.0 + np.asarray(g_eve, float)), 0.0)
    return float(c) if np.ndim(c) == 0 else c


def slot_rates(s: Scenario, dv: "DecisionVariables") -> SlotRates:
    snr = slot_snrs(s, dv.q, dv.p_a, dv.p_r)
    r_u = np.atleast_1d(uplink_rate_lb(snr, dv.l_u, s.eps_r, s.eta_e))
    r_d = np.atleast_1d(downlink_rate_lb(snr, dv.l_d, s.eps_b, s.eta_e))
    b_s = np.atleast_1d(slot_throughput(r_u, r_d, dv.l_u, dv.l_d, s.eps_r, s.eps_b, s.slot_duration))
    c_u = np.atleast_1d(secrecy_capacity(snr.gamma_r, snr.gamma_ae_bar)) * np.ones_like(r_u)
    c_d = np.atleast_1d(secrecy_capacity(snr.gamma_b, snr.gamma_re_tilde))
    return SlotRates(r_u, r_d, b_s, c_u, c_d)


def east(s: Scenario, dv: "DecisionVariables") -> float:
    """Effective average secrecy throughput (bits/s) of a plan, using the lower-bound rates."""
    return float(np.mean(slot_rates(s, dv).b_s))


def slot_bits(s: Scenario, dv: "DecisionVariables") -> tuple[np.ndarray, np.ndarray]:
    """Unclipped per-slot secure bits ``(R_u l_u (1-eps_r), R_d l_d (1-eps_b))``."""
    snr = slot_snrs(s, dv.q, dv.p_a, dv.p_r)
    up = np.atleast_1d(uplink_rate_lb(snr, dv.l_u, s.eps_r, s.eta_e, clip=False)) * dv.l_u * (1 - s.eps_r)
    dn = np.atleast_1d(downlink_rate_lb(snr, dv.l_d, s.eps_b, s.eta_e, clip=False)) * dv.l_d * (1 - s.eps_b)
    return up, dn


# --------------------------------------------------------------------------
# Monte-Carlo estimate of the fading-averaged uplink rate

_CHUNK = 1 << 16  # multiple of 4 so chunks align with Philox output blocks


def philox_uniforms(seed: int, slot: int, start: int, count: int) -> np.ndarray:
    """Uniforms for samples ``start .. start+count-1`` of stream ``(seed, slot)``.

    Sample ``i`` is word ``i % 4`` of Philox block ``i // 4``, so any
    partition of the sample range yields the same values.
    """
    if start % 4:
        raise ValueError("start must be a multiple of 4")
    bg = np.random.Philox(key=[int(seed) & (2**64 - 1), int(slot) & (2**64 - 1)],
                          counter=[start // 4, 0, 0, 0])
    return np.random.Generator(bg).random(count)


def mc_uplink_rate(s: Scenario, q_uav, p_a: float, l_u: float, n_samples: int, seed: int,
                   slot: int = 0, fixed_fading: bool = False) -> tuple[float, float]:
    """Monte-Carlo average of the clipped uplink secrecy rate over Alice-Eve fading.

    Eve sits at the worst-case distance.  Returns ``(estimate, standard_error)``.
    ``fixed_fading=True`` pins the fading gain at its mean (zeta = 1), which
    reduces the estimate to the clipped closed-form bound.
    """
    if n_samples < 1000:
        raise ValueError("mc_uplink_rate: n_samples must be >= 1000")
    q_uav = np.asarray(q_uav, float)
    gamma_r = float(p_a * s.rho_r / np.sum((q_uav - s.q_a) ** 2))
    d_ae = float(worst_case_eve_distance(s, s.q_a))
    if d_ae <= 0:
        raise DegenerateGeometryError("worst-case Alice-Eve distance must be > 0")
    eve_scale = float(p_a * s.rho_e / d_ae**s.alpha)
    qe, qn = q_inv(s.eps_r), q_inv(s.eta_e)
    if p_a <= 0:
        return 0.0, 0.0
    if fixed_fading:
        snr = SlotSnr(gamma_r, 0.0, eve_scale, 0.0)
        return uplink_rate_lb(snr, l_u, s.eps_r, s.eta_e), 0.0

    total = total_sq = 0.0
    for start in range(0, n_samples, _CHUNK):
        count = min(_CHUNK, n_samples - start)
        u = philox_uniforms(seed, slot, start, count)
        a, b = kernels.mc_clipped_moments(u, gamma_r, eve_scale, float(l_u), qe, qn)
        total += a
        total_sq += b
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return mean, math.sqrt(var / n_samples)
