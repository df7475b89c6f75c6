"""Pure numpy implementations of the hot loops; reference for the compiled core."""

from __future__ import annotations

import numpy as np

LOG2E = np.log2(np.e)


def mc_clipped_moments(u, gamma_r, eve_scale, l_u, q_eps, q_eta):
    """Sum and sum of squares of the clipped uplink secrecy-rate integrand.

    ``u`` holds uniforms in [0, 1); the Alice-Eve fading is ``-log1p(-u)`` so
    the Eve SNR is ``eve_scale * zeta``.
    """
    u = np.asarray(u, dtype=np.float64)
    zeta = -np.log1p(-u)
    g_e = eve_scale * zeta
    sq_l = np.sqrt(l_u)
    main = np.log2(1.0 + gamma_r) - LOG2E * np.sqrt(-np.expm1(-2.0 * np.log1p(gamma_r))) / sq_l * q_eps
    leak = np.log2(1.0 + g_e) + LOG2E * np.sqrt(-np.expm1(-2.0 * np.log1p(g_e))) / sq_l * q_eta
    r = np.maximum(main - leak, 0.0)
    return float(np.sum(r)), float(np.sum(r * r))


def grid_best(cap_u, pen_u, p_a, cap_d, pen_d, p_r, l_max, p_tot_a, p_tot_r, eps_r, eps_b):
    """Exhaustive single-slot search over (l_u, p_a, p_r) with l_d = l_max - l_u.

    Per-slot secure bits are ``max(0, min(up, down))`` where
    ``up = (cap_u - pen_u / sqrt(l_u)) * l_u * (1 - eps_r)`` and likewise for the
    downlink.  Points breaking either budget are skipped.  Scan order is l_u,
    then p_a index, then p_r index; the first strict maximum wins.

    Returns ``(best_bits, i_pa, i_pr, l_u)``; indices are -1 when no point is
    admissible.
    """
    cap_u = np.asarray(cap_u, np.float64)
    pen_u = np.asarray(pen_u, np.float64)
    cap_d = np.asarray(cap_d, np.float64)
    pen_d = np.asarray(pen_d, np.float64)
    p_a = np.asarray(p_a, np.float64)
    p_r = np.asarray(p_r, np.float64)
    best, bi, bj, bl = -np.inf, -1, -1, -1
    for lu in range(1, int(l_max)):
        ld = int(l_max) - lu
        ok_a = p_a * lu <= p_tot_a
        ok_r = p_r * ld <= p_tot_r
        if not ok_a.any() or not ok_r.any():
            continue
        up = (cap_u - pen_u / np.sqrt(float(lu))) * float(lu) * (1.0 - eps_r)
        dn = (cap_d - pen_d / np.sqrt(float(ld))) * float(ld) * (1.0 - eps_b)
        up = np.where(ok_a, up, -np.inf)
        dn = np.where(ok_r, dn, -np.inf)
        val = np.maximum(np.minimum(up[:, None], dn[None, :]), 0.0)
        val = np.where(ok_a[:, None] & ok_r[None, :], val, -np.inf)
        k = int(np.argmax(val))
        i, j = divmod(k, val.shape[1])
        if val[i, j] > best:
            best, bi, bj, bl = float(val[i, j]), i, j, lu
    return best, bi, bj, bl
