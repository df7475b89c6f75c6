"""Block successive convex approximation (BSCA) for the secure relaying plan.

Each iteration maximizes a convex surrogate over one block of variables while
the others stay fixed: transmit powers, then (relaxed) blocklengths, then the
UAV trajectory.  The surrogates are tight at the expansion point and
restrictive elsewhere, so any feasible surrogate solution improves the
lower-bound throughput.  Each accepted block step is re-checked against the
true objective; blocklengths are floored once at the end.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import secrecy
from .program import (GUARD, Affine, ConvexProgram, Lin, LogAffine, LogTerm, NormAffine,
                      QuadOverAffine, a0, a1, f_lb_coefficients, tangent_of_concave)
from .radio import DegenerateGeometryError, dispersion, q_inv, slot_snrs, worst_case_eve_distance
from .scenario import Scenario
from .solver import INFEASIBLE_START, NUMERICAL_FAILURE, SolverOptions, solve

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
SHRINK = 1e-7        # relative pull-in used to make warm starts strictly interior
POWER_FLOOR = 1e-6   # tangent expansion floor, as a fraction of p_max


class PlannerError(RuntimeError):
    """A subproblem solve failed; carries the BSCA iteration and block name."""

    def __init__(self, msg, iteration=None, block=None, status=None):
        super().__init__(f"{msg} (iteration {iteration}, block {block}, status {status})")
        self.iteration = iteration
        self.block = block
        self.status = status


@dataclass(frozen=True)
class DecisionVariables:
    q: np.ndarray      # (N, 3) waypoints, m
    p_a: np.ndarray    # W
    p_r: np.ndarray
    l_u: np.ndarray    # channel uses
    l_d: np.ndarray
    tau: np.ndarray    # per-slot secure bits min(uplink, downlink), unclipped

    @property
    def q_r(self) -> np.ndarray:
        return self.q

    @property
    def n_slots(self) -> int:
        return len(self.p_a)

    def with_(self, **kw) -> "DecisionVariables":
        return replace(self, **kw)


def with_true_tau(s: Scenario, dv: DecisionVariables) -> DecisionVariables:
    up, dn = secrecy.slot_bits(s, dv)
    return dv.with_(tau=np.minimum(up, dn))


@dataclass
class PlannerOptions:
    max_iter: int = 100
    epsilon: float | None = None            # EAST convergence threshold, bits/s; None = scenario value
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(kkt_tol=1e-7))
    accept_tol: float = 1e-8                # allowed EAST decrease for an accepted block step
    damping: tuple = (0.5, 0.25, 0.125)     # convex-combination retries for a rejected step
    check_constraints: bool = True
    fill_frame: bool = True                 # give leftover integer channel uses to the weaker hop


@dataclass
class IterationTrace:
    east: list = field(default_factory=list)          # index 0 is the starting point
    deltas: list = field(default_factory=list)        # per iteration: {block: EAST change}
    statuses: list = field(default_factory=list)      # per iteration: {block: solver status}
    accepted: list = field(default_factory=list)      # per iteration: {block: step fraction kept}
    wall_time: list = field(default_factory=list)     # seconds since start, per entry of east
    residuals: list = field(default_factory=list)     # max C1-C9 residual per entry of east

    @property
    def iterations(self) -> int:
        return len(self.east) - 1


@dataclass(frozen=True)
class RunResult:
    scheme: str
    dv: DecisionVariables
    east: float
    trace: IterationTrace
    profiles: dict
    converged: bool
    relaxed_east: float
    elapsed: float


# --------------------------------------------------------------------------
# constraints of the original problem

def constraint_residuals(s: Scenario, dv: DecisionVariables, integer: bool = False) -> dict:
    """Largest violation of each constraint family C1-C10 (<= 0 means satisfied)."""
    q = np.asarray(dv.q, float)
    dt = s.slot_duration
    out = {}
    out["C1"] = max(float(np.linalg.norm(q[0] - s.q_i)), float(np.linalg.norm(q[-1] - s.q_f)))
    if len(q) > 1:
        d = np.diff(q, axis=0)
        out["C2"] = float(np.max(np.linalg.norm(d[:, :2], axis=1) - s.v_xy_max * dt))
        out["C3"] = float(np.max(np.abs(d[:, 2]) - s.v_z_max * dt))
    else:
        out["C2"] = out["C3"] = -math.inf
    out["C4"] = float(np.max(np.maximum(s.h_min - q[:, 2], q[:, 2] - s.h_max)))
    out["C5"] = float(np.sum(dv.p_a * dv.l_u) - s.p_tot_alice)
    out["C6"] = float(np.sum(dv.p_r * dv.l_d) - s.p_tot_uav)
    out["C7"] = float(np.max(np.maximum(-dv.p_a, dv.p_a - s.p_max_alice)))
    out["C8"] = float(np.max(np.maximum(-dv.p_r, dv.p_r - s.p_max_uav)))
    out["C9"] = float(np.max(np.maximum(dv.l_u + dv.l_d - s.l_max, np.maximum(1 - dv.l_u, 1 - dv.l_d))))
    if integer:
        l = np.concatenate([dv.l_u, dv.l_d])
        out["C10"] = float(np.max(np.abs(l - np.round(l))))
    return out


def max_residual(res: dict) -> float:
    return max(v for k, v in res.items() if k != "C10")


# --------------------------------------------------------------------------
# initialization

def straight_line(s: Scenario) -> np.ndarray:
    n = s.n_slots
    if n == 1:
        return s.q_i[None, :].copy()
    f = np.arange(n)[:, None] / (n - 1)
    return s.q_i[None, :] + f * (s.q_f - s.q_i)[None, :]


def initial_feasible(s: Scenario) -> DecisionVariables:
    """Straight constant-speed path, equal blocklength split, budget-spread constant powers."""
    n = s.n_slots
    q = straight_line(s)
    if n > 1:
        d = np.diff(q, axis=0)
        if (np.max(np.linalg.norm(d[:, :2], axis=1)) > s.v_xy_max * s.slot_duration * (1 + 1e-12)
                or np.max(np.abs(d[:, 2])) > s.v_z_max * s.slot_duration * (1 + 1e-12)):
            raise ValueError("straight-line path violates the UAV speed limits")
    l0 = float(math.floor(s.l_max / 2))
    p_a = min(s.p_max_alice, s.p_tot_alice / (n * l0))
    p_r = min(s.p_max_uav, s.p_tot_uav / (n * l0))
    dv = DecisionVariables(q=q, p_a=np.full(n, p_a), p_r=np.full(n, p_r), l_u=np.full(n, l0),
                           l_d=np.full(n, l0), tau=np.zeros(n))
    return with_true_tau(s, dv)


# --------------------------------------------------------------------------
# power subproblem

def power_constants(s: Scenario, dv: DecisionVariables, local: DecisionVariables | None = None):
    """Per-slot constants of the power surrogate for both hops (arrays of shape (N,))."""
    local = local if local is not None else dv
    q = dv.q
    d_ae = float(worst_case_eve_distance(s, s.q_a))
    d_re = worst_case_eve_distance(s, q)
    if d_ae <= 0 or np.any(d_re <= 0):
        raise DegenerateGeometryError("expansion point inside the Eve uncertainty ball")
    hops = {}
    for hop, k1, k2, l, eps, p0, pmax in (
            ("a", s.rho_r / np.sum((q - s.q_a) ** 2, axis=1), np.full(len(q), s.rho_e / d_ae**s.alpha),
             dv.l_u, s.eps_r, local.p_a, s.p_max_alice),
            ("r", s.rho_b / np.sum((q - s.q_b) ** 2, axis=1), s.rho_e / d_re**2,
             dv.l_d, s.eps_b, local.p_r, s.p_max_uav)):
        l = np.asarray(l, float)
        p_exp = np.maximum(np.asarray(p0, float), POWER_FLOOR * pmax)
        k6 = k2 / (1.0 + k2 * p_exp)
        k7 = np.log1p(k2 * p_exp) - k6 * p_exp
        hops[hop] = dict(k1=k1, k2=k2, k3=q_inv(eps) / np.sqrt(l), k4=q_inv(s.eta_e) / np.sqrt(l),
                         k5=LN2 / (l * (1.0 - eps)), k6=k6, k7=k7, p_exp=p_exp)
    return hops


def build_power_subproblem(s: Scenario, dv: DecisionVariables, local: DecisionVariables | None = None
                           ) -> ConvexProgram:
    """Power block: variables p_a, p_r, tau, s_a, s_r, nu_a, nu_r (blocklengths and path fixed)."""
    local = local if local is not None else dv
    n = dv.n_slots
    hops = power_constants(s, dv, local)
    prog = ConvexProgram()
    idx = {k: np.zeros(n, int) for k in ("p_a", "p_r", "tau", "s_a", "s_r", "nu_a", "nu_r")}
    idx["nu_a"][:] = -1
    idx["nu_r"][:] = -1
    tight = {}

    pmax = {"a": s.p_max_alice, "r": s.p_max_uav}
    p_loc = {"a": np.asarray(local.p_a, float), "r": np.asarray(local.p_r, float)}
    for j in range(n):
        for hop in ("a", "r"):
            p0 = p_loc[hop][j]
            warm = max(p0 * (1.0 - SHRINK), 1e-12 * pmax[hop])
            warm = min(warm, pmax[hop] * (1.0 - SHRINK))
            idx["p_" + hop][j] = prog.add_var(f"p_{hop}[{j}]", 0.0, pmax[hop], warm, block="p")
        idx["tau"][j] = prog.add_var(f"tau[{j}]", warm=0.0, block="tau")
        for hop in ("a", "r"):
            idx["s_" + hop][j] = prog.add_var(f"s_{hop}[{j}]", GUARD, math.inf, 1.0, block="slack")
            if hops[hop]["k2"][j] > 0:
                idx["nu_" + hop][j] = prog.add_var(f"nu_{hop}[{j}]", GUARD, math.inf, 1.0, block="slack")

    tot = {"a": (dv.l_u, s.p_tot_alice), "r": (dv.l_d, s.p_tot_uav)}
    for hop in ("a", "r"):
        l, ptot = tot[hop]
        prog.add(Affine({int(idx["p_" + hop][j]): float(l[j]) for j in range(n)}, ptot, "<=",
                        tag=f"budget_{hop}"))

    x_warm = prog.warm_start()
    x_tight = x_warm.copy()
    for j in range(n):
        t_cap_warm, t_cap_tight = [], []
        for hop in ("a", "r"):
            h = hops[hop]
            ip, is_, inu, it = (int(idx["p_" + hop][j]), int(idx["s_" + hop][j]),
                                int(idx["nu_" + hop][j]), int(idx["tau"][j]))
            k1, k2, k3, k4, k5 = (float(h[k][j]) for k in ("k1", "k2", "k3", "k4", "k5"))
            k6, k7, pe = float(h["k6"][j]), float(h["k7"][j]), float(h["p_exp"][j])
            lin = {is_: -k3, it: -k5, ip: -k6}
            if inu >= 0:
                lin[inu] = -k4
            prog.add(LogAffine((LogTerm(1.0, Lin({ip: k1}, 1.0)),), Lin(lin, -k7), tag=f"rate_{hop}[{j}]"))
            sl, ic = tangent_of_concave("half_log_kx2kx", pe, k1)
            prog.add(LogAffine((LogTerm(1.0, Lin({is_: 1.0})), LogTerm(1.0, Lin({ip: k1}, 1.0))),
                               Lin({ip: -sl}, -ic), tag=f"disp_{hop}[{j}]"))
            if inu >= 0:
                sl2, ic2 = tangent_of_concave("half_log_kx2kx", pe, k2)
                prog.add(LogAffine((LogTerm(1.0, Lin({inu: 1.0})), LogTerm(1.0, Lin({ip: k2}, 1.0))),
                                   Lin({ip: -sl2}, -ic2), tag=f"leak_{hop}[{j}]"))
            for x, caps, margin in ((x_warm, t_cap_warm, 1.0 + SHRINK), (x_tight, t_cap_tight, 1.0)):
                p = x[ip] if x is x_warm else p_loc[hop][j]
                if x is x_tight:
                    x[ip] = p
                lift = 2.0 * GUARD if x is x_warm else 0.0  # keep warm slacks inside their guards
                x[is_] = max(math.exp(sl * p + ic - math.log1p(k1 * p)) * margin, lift)
                nu = 0.0
                if inu >= 0:
                    x[inu] = nu = max(math.exp(sl2 * p + ic2 - math.log1p(k2 * p)) * margin, lift)
                caps.append((math.log1p(k1 * p) - k3 * x[is_] - k4 * nu - k6 * p - k7) / k5)
        t = min(t_cap_warm)
        x_warm[int(idx["tau"][j])] = t - SHRINK * max(1.0, abs(t))
        x_tight[int(idx["tau"][j])] = min(t_cap_tight)
    prog.set_warm(x_warm)
    prog.maximize({int(i): 1.0 for i in idx["tau"]})
    prog.meta.update(kind="power", index=idx, tight=x_tight)
    return prog


def _decode_power(dv, prog, x):
    idx = prog.meta["index"]
    return dv.with_(p_a=np.maximum(x[idx["p_a"]], 0.0), p_r=np.maximum(x[idx["p_r"]], 0.0))


# --------------------------------------------------------------------------
# blocklength subproblem

def blocklength_constants(s: Scenario, dv: DecisionVariables):
    snr = slot_snrs(s, dv.q, dv.p_a, dv.p_r)
    out = {}
    for hop, g, ge, eps in (("u", snr.gamma_r, snr.gamma_ae_bar, s.eps_r),
                            ("d", snr.gamma_b, snr.gamma_re_tilde, s.eps_b)):
        g = np.atleast_1d(np.asarray(g, float)) * np.ones(dv.n_slots)
        ge = np.atleast_1d(np.asarray(ge, float)) * np.ones(dv.n_slots)
        c0 = (1.0 - eps) * (np.log2(1.0 + g) - np.log2(1.0 + ge))
        c1 = (1.0 - eps) * (np.sqrt(dispersion(g)) * q_inv(eps) + np.sqrt(dispersion(ge)) * q_inv(s.eta_e))
        out[hop] = (c0, c1)
    return out


def build_blocklength_subproblem(s: Scenario, dv: DecisionVariables) -> ConvexProgram:
    """Relaxed blocklength block: variables l_u, l_d, tau (powers and path fixed)."""
    n = dv.n_slots
    consts = blocklength_constants(s, dv)
    prog = ConvexProgram()
    idx = {k: np.zeros(n, int) for k in ("l_u", "l_d", "tau")}
    loc = {"u": np.asarray(dv.l_u, float), "d": np.asarray(dv.l_d, float)}
    for j in range(n):
        for hop in ("u", "d"):
            w = 1.0 + (loc[hop][j] - 1.0) * (1.0 - SHRINK)
            if w <= 1.0:
                w = 1.0 + 1e-9
            idx["l_" + hop][j] = prog.add_var(f"l_{hop}[{j}]", 1.0, math.inf, w, block="l")
        idx["tau"][j] = prog.add_var(f"tau[{j}]", warm=0.0, block="tau")
    prog.add(Affine({int(idx["l_u"][j]): float(dv.p_a[j]) for j in range(n) if dv.p_a[j] > 0} or {0: 0.0},
                    s.p_tot_alice, tag="budget_a"))
    prog.add(Affine({int(idx["l_d"][j]): float(dv.p_r[j]) for j in range(n) if dv.p_r[j] > 0} or {0: 0.0},
                    s.p_tot_uav, tag="budget_r"))
    x_warm = prog.warm_start()
    x_tight = x_warm.copy()
    for j in range(n):
        prog.add(Affine({int(idx["l_u"][j]): 1.0, int(idx["l_d"][j]): 1.0}, float(s.l_max), tag=f"frame[{j}]"))
        caps_w, caps_t = [], []
        it = int(idx["tau"][j])
        for hop in ("u", "d"):
            c0, c1 = (float(v[j]) for v in consts[hop])
            il = int(idx["l_" + hop][j])
            sl, ic = tangent_of_concave("sqrt", loc[hop][j])
            # c0 l - tau >= c1 (sl l + ic)
            prog.add(Affine({il: c0 - c1 * sl, it: -1.0}, c1 * ic, ">=", tag=f"bits_{hop}[{j}]"))
            caps_w.append((c0 - c1 * sl) * x_warm[il] - c1 * ic)
            caps_t.append(c0 * loc[hop][j] - c1 * math.sqrt(loc[hop][j]))
            x_tight[il] = loc[hop][j]
        t = min(caps_w)
        x_warm[it] = t - SHRINK * max(1.0, abs(t))
        x_tight[it] = min(caps_t)
    prog.set_warm(x_warm)
    prog.maximize({int(i): 1.0 for i in idx["tau"]})
    prog.meta.update(kind="blocklength", index=idx, tight=x_tight)
    return prog


def _decode_blocklength(dv, prog, x):
    idx = prog.meta["index"]
    return dv.with_(l_u=np.maximum(x[idx["l_u"]], 1.0), l_d=np.maximum(x[idx["l_d"]], 1.0))


# --------------------------------------------------------------------------
# trajectory subproblem

def interior_reference_path(s: Scenario) -> np.ndarray:
    """Straight path with free waypoints lifted strictly inside the altitude band."""
    q = straight_line(s)
    if len(q) <= 2:
        return q
    dz = abs(float(q[1, 2] - q[0, 2]))
    room = min(s.v_z_max * s.slot_duration - dz, s.h_max - s.h_min)
    delta = 0.25 * max(room, 0.0)
    q[1:-1, 2] = np.clip(q[1:-1, 2], s.h_min + delta, s.h_max - delta)
    return q


def trajectory_constants(s: Scenario, dv: DecisionVariables):
    lu, ld = np.asarray(dv.l_u, float), np.asarray(dv.l_d, float)
    d_ae = float(worst_case_eve_distance(s, s.q_a))
    g_ae = np.asarray(dv.p_a, float) * s.rho_e / d_ae**s.alpha
    qe, qb, qn = q_inv(s.eps_r), q_inv(s.eps_b), q_inv(s.eta_e)
    log2e = 1.0 / LN2
    return dict(
        b0=qe * log2e / np.sqrt(lu),
        b1=np.log2(1.0 + g_ae) + np.sqrt(dispersion(g_ae) / lu) * qn,
        b2=1.0 / (lu * (1.0 - s.eps_r)),
        c0=qb * log2e / np.sqrt(ld),
        c1=qn * log2e / np.sqrt(ld),
        c2=1.0 / (ld * (1.0 - s.eps_b)),
    )


def _active_slots(s: Scenario, dv: DecisionVariables) -> np.ndarray:
    return ((np.asarray(dv.p_a) > POWER_FLOOR * s.p_max_alice)
            & (np.asarray(dv.p_r) > POWER_FLOOR * s.p_max_uav))


def _beta(lam):
    return math.sqrt(-math.expm1(-2.0 * math.log1p(lam)))


def build_trajectory_subproblem(s: Scenario, dv: DecisionVariables, local: DecisionVariables | None = None
                                ) -> ConvexProgram:
    """Trajectory block: waypoints, tau and the slack chains lambda, beta, omega, psi, u, v.

    Endpoints are substituted as constants.  Powers and blocklengths stay
    fixed, so their constraints are not repeated here.  Slots where either
    transmitter is (numerically) silent carry only ``tau <= 0``.
    """
    local = local if local is not None else dv
    n = dv.n_slots
    q0 = np.asarray(local.q, float)
    if np.any(worst_case_eve_distance(s, q0) <= 0):
        raise DegenerateGeometryError("trajectory expansion point inside the Eve uncertainty ball")
    cst = trajectory_constants(s, dv)
    active = _active_slots(s, dv)
    true_tau = with_true_tau(s, local).tau
    theta = 1e-6
    q_ref = interior_reference_path(s)
    q_warm = q0 + theta * (q_ref - q0)
    q_warm[0], q_warm[-1] = s.q_i, s.q_f

    prog = ConvexProgram()
    qidx = -np.ones((n, 3), int)
    names = ("tau", "lam1", "lam2", "beta1", "om1", "om2", "psi1", "u1", "v1", "v2")
    idx = {k: -np.ones(n, int) for k in names}
    bounds = [(-math.inf, math.inf), (-math.inf, math.inf), (s.h_min, s.h_max)]
    for j in range(1, n - 1):
        for k in range(3):
            qidx[j, k] = prog.add_var(f"q[{j}].{'xyz'[k]}", *bounds[k], warm=float(q_warm[j, k]), block="q")

    def qlin(j, k, scale=1.0, shift=0.0):
        if qidx[j, k] >= 0:
            return Lin({int(qidx[j, k]): scale}, -scale * shift)
        return Lin({}, scale * (float(q_warm[j, k]) - shift))

    # motion constraints
    vxy, vz = s.v_xy_max * s.slot_duration, s.v_z_max * s.slot_duration
    for j in range(n - 1):
        if qidx[j, 0] < 0 and qidx[j + 1, 0] < 0:
            continue
        rows = []
        for k in range(2):
            a, b = qlin(j + 1, k), qlin(j, k)
            co = dict(a.coeffs)
            for i, c in b.coeffs.items():
                co[i] = co.get(i, 0.0) - c
            rows.append(Lin(co, a.const - b.const))
        prog.add(NormAffine(tuple(rows), Lin({}, vxy), tag=f"speed_xy[{j}]"))
        a, b = qlin(j + 1, 2), qlin(j, 2)
        co = dict(a.coeffs)
        for i, c in b.coeffs.items():
            co[i] = co.get(i, 0.0) - c
        prog.add(Affine(co, vz - (a.const - b.const), "<=", tag=f"climb[{j}]"))
        prog.add(Affine(co, -vz - (a.const - b.const), ">=", tag=f"descend[{j}]"))

    x_warm_parts, x_tight_parts = {}, {}
    dlt = s.eve_uncertainty
    for j in range(n):
        if not active[j]:
            idx["tau"][j] = prog.add_var(f"tau[{j}]", -math.inf, 0.0, -1.0, block="tau")
            x_tight_parts[int(idx["tau"][j])] = 0.0
            continue
        for k in names:
            lo = -math.inf if k == "tau" else GUARD
            idx[k][j] = prog.add_var(f"{k}[{j}]", lo, math.inf, 1.0, block="tau" if k == "tau" else "slack")
        I = {k: int(idx[k][j]) for k in names}
        pa, pr = float(dv.p_a[j]), float(dv.p_r[j])
        b0, b1, b2, c0, c1, c2 = (float(cst[k][j]) for k in ("b0", "b1", "b2", "c0", "c1", "c2"))

        # expansion (tight) values
        t_lam2 = float(np.sum((q0[j] - s.q_a) ** 2)) / (pa * s.rho_r)
        t_lam1 = 1.0 / t_lam2
        t_om2 = float(np.sum((q0[j] - s.q_b) ** 2)) / (pr * s.rho_b)
        t_om1 = 1.0 / t_om2
        d0 = float(np.linalg.norm(q0[j] - s.q_e))
        t_u1 = (d0 - dlt) ** 2 / (pr * s.rho_e)
        t_v2 = 1.0 / t_u1
        tight = dict(lam2=t_lam2, lam1=t_lam1, beta1=_beta(t_lam1), om2=t_om2, om1=t_om1,
                     psi1=_beta(t_om1), u1=t_u1, v2=t_v2, v1=_beta(t_v2), tau=float(true_tau[j]))

        # uplink chain
        sa = math.sqrt(pa * s.rho_r)
        prog.add(QuadOverAffine(tuple(qlin(j, k, 1.0 / sa, s.q_a[k]) for k in range(3)),
                                Lin({I["lam2"]: 1.0}), Lin({}, 1.0), tag=f"lam2[{j}]"))
        cx, cy, cc = f_lb_coefficients(t_lam1, t_lam2)
        prog.add(Affine({I["lam1"]: cx, I["lam2"]: cy}, 1.0 - cc, ">=", tag=f"lam_prod[{j}]"))
        sl_l, ic_l = tangent_of_concave("half_log_kx2kx", t_lam1, 1.0)
        prog.add(LogAffine((LogTerm(1.0, Lin({I["beta1"]: 1.0})), LogTerm(1.0, Lin({I["lam1"]: 1.0}, 1.0))),
                           Lin({I["lam1"]: -sl_l}, -ic_l), tag=f"beta1[{j}]"))
        prog.add(LogAffine((LogTerm(1.0, Lin({I["lam1"]: 1.0}, 1.0)),),
                           Lin({I["beta1"]: -LN2 * b0, I["tau"]: -LN2 * b2}, -LN2 * b1), tag=f"up[{j}]"))

        # downlink chain
        sb = math.sqrt(pr * s.rho_b)
        prog.add(QuadOverAffine(tuple(qlin(j, k, 1.0 / sb, s.q_b[k]) for k in range(3)),
                                Lin({I["om2"]: 1.0}), Lin({}, 1.0), tag=f"om2[{j}]"))
        cx, cy, cc = f_lb_coefficients(t_om1, t_om2)
        prog.add(Affine({I["om1"]: cx, I["om2"]: cy}, 1.0 - cc, ">=", tag=f"om_prod[{j}]"))
        sl_o, ic_o = tangent_of_concave("half_log_kx2kx", t_om1, 1.0)
        prog.add(LogAffine((LogTerm(1.0, Lin({I["psi1"]: 1.0})), LogTerm(1.0, Lin({I["om1"]: 1.0}, 1.0))),
                           Lin({I["om1"]: -sl_o}, -ic_o), tag=f"psi1[{j}]"))

        # Eve distance: p_r rho_e u1 + 2 Delta ||q - qe|| <= ||q0-qe||^2 + 2 (q0-qe).(q-q0) + Delta^2
        g = 2.0 * (q0[j] - s.q_e)
        co = {}
        const = float(np.sum((q0[j] - s.q_e) ** 2)) + dlt * dlt
        for k in range(3):
            lk = qlin(j, k)
            for i, c in lk.coeffs.items():
                co[i] = co.get(i, 0.0) + g[k] * c
            const += g[k] * (lk.const - q0[j, k])
        pre = pr * s.rho_e
        if dlt > 0:
            co_n = {i: c / (2 * dlt) for i, c in co.items()}
            co_n[I["u1"]] = -pre / (2 * dlt)
            prog.add(NormAffine(tuple(qlin(j, k, 1.0, s.q_e[k]) for k in range(3)),
                                Lin(co_n, const / (2 * dlt)), tag=f"eve[{j}]"))
        else:
            co_a = {i: -c for i, c in co.items()}
            co_a[I["u1"]] = pre
            prog.add(Affine(co_a, const, "<=", tag=f"eve[{j}]"))
        sl_v, ic_v = tangent_of_concave("half_log_kx2kx", t_v2, 1.0)
        prog.add(LogAffine((LogTerm(1.0, Lin({I["v1"]: 1.0})), LogTerm(1.0, Lin({I["v2"]: 1.0}, 1.0))),
                           Lin({I["v2"]: -sl_v}, -ic_v), tag=f"v1[{j}]"))
        prog.add(QuadOverAffine((Lin({}, 1.0),), Lin({I["u1"]: 1.0}), Lin({I["v2"]: 1.0}), tag=f"uv[{j}]"))
        prog.add(LogAffine((LogTerm(1.0, Lin({I["om1"]: 1.0}, 1.0)),),
                           Lin({I["psi1"]: -LN2 * c0, I["v1"]: -LN2 * c1, I["tau"]: -LN2 * c2}),
                           ((1.0, I["u1"]),), tag=f"down[{j}]"))

        # strictly interior warm start, chained through the slack constraints
        m = 1.0 + SHRINK
        qw = q_warm[j]
        w = {}
        w["lam2"] = float(np.sum((qw - s.q_a) ** 2)) / (pa * s.rho_r) * m
        cx, cy, cc = f_lb_coefficients(t_lam1, t_lam2)
        w["lam1"] = (cc + cy * w["lam2"] - 1.0) / (-cx) * (1.0 - SHRINK)
        w["beta1"] = math.exp(sl_l * w["lam1"] + ic_l - math.log1p(w["lam1"])) * m
        w["om2"] = float(np.sum((qw - s.q_b) ** 2)) / (pr * s.rho_b) * m
        cx, cy, cc = f_lb_coefficients(t_om1, t_om2)
        w["om1"] = (cc + cy * w["om2"] - 1.0) / (-cx) * (1.0 - SHRINK)
        w["psi1"] = math.exp(sl_o * w["om1"] + ic_o - math.log1p(w["om1"])) * m
        dw = float(np.linalg.norm(qw - s.q_e))
        rhs = float(np.sum((q0[j] - s.q_e) ** 2)) + float(g @ (qw - q0[j])) + dlt * dlt - 2.0 * dlt * dw
        w["u1"] = rhs / pre * (1.0 - SHRINK)
        w["v2"] = 1.0 / w["u1"] * m
        w["v1"] = math.exp(sl_v * w["v2"] + ic_v - math.log1p(w["v2"])) * m
        t_up = (math.log1p(w["lam1"]) - LN2 * b0 * w["beta1"] - LN2 * b1) / (LN2 * b2)
        t_dn = (math.log1p(w["om1"]) - LN2 * c0 * w["psi1"] + math.log(w["u1"]) - math.log1p(w["u1"])
                - LN2 * c1 * w["v1"]) / (LN2 * c2)
        t = min(t_up, t_dn)
        w["tau"] = t - SHRINK * max(1.0, abs(t))
        if not all(v > 0 and math.isfinite(v) for k, v in w.items() if k != "tau"):
            raise DegenerateGeometryError(f"cannot build an interior warm start for slot {j}")
        for k in names:
            x_warm_parts[I[k]] = w[k]
            x_tight_parts[I[k]] = tight[k]

    x_warm = prog.warm_start()
    x_tight = x_warm.copy()
    for i, v in x_warm_parts.items():
        x_warm[i] = v
    for i, v in x_tight_parts.items():
        x_tight[i] = v
    for j in range(1, n - 1):
        x_tight[qidx[j]] = q0[j]
    prog.set_warm(x_warm)
    prog.maximize({int(i): 1.0 for i in idx["tau"]})
    prog.meta.update(kind="trajectory", index=idx, q_index=qidx, tight=x_tight, active=active)
    return prog


def _decode_trajectory(dv, prog, x, s):
    qidx = prog.meta["q_index"]
    q = np.array(dv.q, float)
    for j in range(1, len(q) - 1):
        q[j] = x[qidx[j]]
    q[0], q[-1] = s.q_i, s.q_f
    return dv.with_(q=q)


# --------------------------------------------------------------------------
# BSCA driver

BLOCKS = {
    "power": (build_power_subproblem, lambda dv, p, x, s: _decode_power(dv, p, x)),
    "blocklength": (build_blocklength_subproblem, lambda dv, p, x, s: _decode_blocklength(dv, p, x)),
    "trajectory": (build_trajectory_subproblem, _decode_trajectory),
}


def _safe_east(s, dv):
    try:
        return secrecy.east(s, dv)
    except DegenerateGeometryError:
        return -math.inf


def _blend(old: DecisionVariables, new: DecisionVariables, t: float) -> DecisionVariables:
    return DecisionVariables(*(o + t * (nw - o) for o, nw in
                               ((old.q, new.q), (old.p_a, new.p_a), (old.p_r, new.p_r),
                                (old.l_u, new.l_u), (old.l_d, new.l_d), (old.tau, new.tau))))


def _block_step(s, dv, block, opts, iteration):
    if block == "trajectory" and dv.n_slots <= 2:
        return dv, "skipped"
    build, decode = BLOCKS[block]
    prog = build(s, dv)
    rep = solve(prog, opts.solver)
    if rep.status in (INFEASIBLE_START, NUMERICAL_FAILURE):
        raise PlannerError("subproblem solve failed", iteration, block, rep.status)
    cand = decode(dv, prog, rep.point, s)
    return cand, rep.status


def round_blocklengths(s: Scenario, dv: DecisionVariables, snap: float = 1e-7) -> DecisionVariables:
    """Floor the relaxed blocklengths (never below 1) and re-evaluate tau.

    Interior-point solutions sit a hair inside their bounds, so values within
    ``snap`` of an integer are first rounded to it when that keeps the budget
    and frame constraints; everything else is floored.
    """
    lu = np.asarray(dv.l_u, float)
    ld = np.asarray(dv.l_d, float)
    out = None
    if snap > 0:
        ru, rd = np.round(lu), np.round(ld)
        cand = dv.with_(l_u=np.where(np.abs(lu - ru) < snap, ru, np.floor(lu)),
                        l_d=np.where(np.abs(ld - rd) < snap, rd, np.floor(ld)))
        res = constraint_residuals(s, cand)
        if all(res[k] <= 0 for k in ("C5", "C6", "C9")):
            out = cand
    if out is None:
        out = dv.with_(l_u=np.floor(lu), l_d=np.floor(ld))
    out = with_true_tau(s, out.with_(l_u=np.maximum(out.l_u, 1.0), l_d=np.maximum(out.l_d, 1.0)))
    res = constraint_residuals(s, out, integer=True)
    bad = {k: v for k, v in res.items() if k in ("C5", "C6", "C9", "C10") and v > 1e-8}
    if bad:
        raise AssertionError(f"rounding broke constraints: {bad}")
    return out


def fill_frame_slack(s: Scenario, dv: DecisionVariables) -> DecisionVariables:
    """Hand leftover integer channel uses to the weaker hop of each slot.

    After flooring, a slot may have ``l_u + l_d < l_max``.  One unit at a time
    goes to the hop whose bits are the slot minimum, as long as the power
    budgets still hold and the slot's secure bits strictly grow.
    """
    l_u = np.array(dv.l_u, float)
    l_d = np.array(dv.l_d, float)
    p_a, p_r = np.asarray(dv.p_a, float), np.asarray(dv.p_r, float)
    used_a, used_r = float(p_a @ l_u), float(p_r @ l_d)
    cur = with_true_tau(s, dv)
    up, dn = secrecy.slot_bits(s, cur)
    for j in np.argsort(np.minimum(up, dn)):
        while l_u[j] + l_d[j] + 1 <= s.l_max:
            hop_u = up[j] <= dn[j]
            if hop_u and used_a + p_a[j] > s.p_tot_alice:
                break
            if not hop_u and used_r + p_r[j] > s.p_tot_uav:
                break
            trial_u = l_u[j] + (1 if hop_u else 0)
            trial_d = l_d[j] + (0 if hop_u else 1)
            one = dv.with_(q=dv.q[j:j + 1], p_a=p_a[j:j + 1], p_r=p_r[j:j + 1],
                           l_u=np.array([trial_u]), l_d=np.array([trial_d]), tau=np.zeros(1))
            nu, nd = secrecy.slot_bits(s, one)
            if not min(nu[0], nd[0]) > min(up[j], dn[j]):
                break
            l_u[j], l_d[j] = trial_u, trial_d
            up[j], dn[j] = nu[0], nd[0]
            if hop_u:
                used_a += p_a[j]
            else:
                used_r += p_r[j]
    return with_true_tau(s, dv.with_(l_u=l_u, l_d=l_d))


def profiles(s: Scenario, dv: DecisionVariables) -> dict:
    """Per-slot quantities behind the trajectory, power and rate figures."""
    q = np.asarray(dv.q, float)
    vel = np.zeros_like(q)
    if len(q) > 1:
        vel[:-1] = np.diff(q, axis=0) / s.slot_duration
    rates = secrecy.slot_rates(s, dv)
    snr = slot_snrs(s, q, dv.p_a, dv.p_r)
    n = len(q)

    def arr(v):
        return np.asarray(v, float) * np.ones(n)

    return {
        "slot": np.arange(1, n + 1), "x": q[:, 0], "y": q[:, 1], "z": q[:, 2],
        "v_xy": np.linalg.norm(vel[:, :2], axis=1), "v_z": vel[:, 2],
        "p_a": arr(dv.p_a), "p_r": arr(dv.p_r), "l_u": arr(dv.l_u), "l_d": arr(dv.l_d),
        "gamma_r": arr(snr.gamma_r), "gamma_b": arr(snr.gamma_b),
        "gamma_ae": arr(snr.gamma_ae_bar), "gamma_re": arr(snr.gamma_re_tilde),
        "r_u_fbl": rates.r_u_lb, "r_d_fbl": rates.r_d_lb, "r_u_inf": rates.c_u_inf,
        "r_d_inf": rates.c_d_inf, "b_s": rates.b_s,
    }


def run_blocks(s: Scenario, blocks: tuple, opts: PlannerOptions | None = None, scheme: str = "jtrd",
               start: DecisionVariables | None = None) -> RunResult:
    """Alternate the given blocks from the initial point until the EAST change is below epsilon."""
    opts = opts or PlannerOptions()
    eps = s.epsilon_conv if opts.epsilon is None else opts.epsilon
    t0 = time.perf_counter()
    dv = start if start is not None else initial_feasible(s)
    tr = IterationTrace()
    cur = secrecy.east(s, dv)
    tr.east.append(cur)
    tr.wall_time.append(0.0)
    if opts.check_constraints:
        tr.residuals.append(max_residual(constraint_residuals(s, dv)))
    converged = not blocks
    for it in range(1, opts.max_iter + 1):
        if not blocks:
            break
        prev = cur
        deltas, stats, acc = {}, {}, {}
        for block in blocks:
            cand, status = _block_step(s, dv, block, opts, it)
            stats[block] = status
            if status == "skipped":
                deltas[block] = 0.0
                acc[block] = 0.0
                continue
            cand = with_true_tau(s, cand) if _safe_east(s, cand) > -math.inf else cand
            val = _safe_east(s, cand)
            kept = 1.0
            if not val >= cur - opts.accept_tol:
                kept = 0.0
                for t in opts.damping:
                    trial = _blend(dv, cand, t)
                    tv = _safe_east(s, trial)
                    if tv >= cur - opts.accept_tol:
                        cand, val, kept = with_true_tau(s, trial), tv, t
                        break
            if kept > 0:
                deltas[block] = val - cur
                dv, cur = cand, val
            else:
                deltas[block] = 0.0
                log.debug("iteration %d: %s step rejected", it, block)
            acc[block] = kept
        tr.east.append(cur)
        tr.deltas.append(deltas)
        tr.statuses.append(stats)
        tr.accepted.append(acc)
        tr.wall_time.append(time.perf_counter() - t0)
        if opts.check_constraints:
            tr.residuals.append(max_residual(constraint_residuals(s, dv)))
        log.info("%s iteration %d: EAST %.6f (%+.3e)", scheme, it, cur, cur - prev)
        if abs(cur - prev) <= eps:
            converged = True
            break
    relaxed = cur
    final = round_blocklengths(s, dv)
    if opts.fill_frame:
        final = fill_frame_slack(s, final)
    east_final = secrecy.east(s, final)
    return RunResult(scheme, final, east_final, tr, profiles(s, final), converged, relaxed,
                     time.perf_counter() - t0)


def run_bsca(s: Scenario, opts: PlannerOptions | None = None) -> RunResult:
    """Joint trajectory and resource design: power, blocklength, trajectory blocks in turn."""
    return run_blocks(s, ("power", "blocklength", "trajectory"), opts, "jtrd")


def run_rdft(s: Scenario, opts: PlannerOptions | None = None) -> RunResult:
    """Resource design over the fixed straight-line trajectory."""
    return run_blocks(s, ("power", "blocklength"), opts, "rdft")


def run_tdfr(s: Scenario, opts: PlannerOptions | None = None) -> RunResult:
    """Trajectory design with the initial powers and blocklengths frozen."""
    return run_blocks(s, ("trajectory",), opts, "tdfr")


def run_initial(s: Scenario, opts: PlannerOptions | None = None) -> RunResult:
    return run_blocks(s, (), opts, "initial")


SCHEMES = {"jtrd": run_bsca, "rdft": run_rdft, "tdfr": run_tdfr, "initial": run_initial}


def run_scheme(s: Scenario, scheme: str, opts: PlannerOptions | None = None) -> RunResult:
    try:
        fn = SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}") from None
    return fn(s, opts)
