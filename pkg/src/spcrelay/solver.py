"""Primal log-barrier interior-point method for :class:`~spcrelay.program.ConvexProgram`.

The program is compiled once into sparse matrices so that the barrier value,
gradient and Hessian of every atom family are evaluated in a few batched
operations.  Each barrier stage minimizes ``-(c.x)/mu + phi(x)`` by damped
Newton steps with a backtracking line search that refuses to leave the
domain; ``mu`` then shrinks by a constant factor.  Equality atoms, if any,
are kept through the KKT system.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .program import (Affine, ConvexProgram, LogAffine, LogRatio, NormAffine, QuadOverAffine,
                      check_feasibility)

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE_START = "infeasible_start"
NUMERICAL_FAILURE = "numerical_failure"

MAX_RECENTER = 3  # extra Newton rounds allowed at one barrier weight


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    kkt_tol: float = 1e-6
    max_newton: int = 50
    reduction: float = 0.2
    mu0: float = 1.0
    newton_tol: float = 1e-9
    max_stages: int = 60

    def __post_init__(self):
        if not (self.feas_tol > 0 and self.kkt_tol > 0 and self.newton_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.reduction < 1:
            raise ValueError("reduction factor must lie in (0, 1)")
        if not (self.mu0 > 0 and self.max_newton >= 1):
            raise ValueError("mu0 must be > 0 and max_newton >= 1")


@dataclass
class SolveReport:
    status: str
    point: np.ndarray
    objective: float
    max_constraint_violation: float
    stationarity_residual: float
    barrier_iterations: int
    newton_iterations: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def dump_trace(report: SolveReport, path) -> None:
    """Write the iteration trace as one JSON record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in report.trace:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# compilation

class _Rows:
    """COO accumulator for a stack of affine forms."""

    def __init__(self):
        self.r, self.c, self.v, self.k = [], [], [], []

    def add(self, coeffs: dict, const: float, scale: float = 1.0) -> int:
        row = len(self.k)
        for i, a in coeffs.items():
            self.r.append(row)
            self.c.append(i)
            self.v.append(scale * a)
        self.k.append(scale * const)
        return row

    def build(self, n: int):
        m = len(self.k)
        mat = sp.csr_matrix((np.asarray(self.v, float), (np.asarray(self.r, int), np.asarray(self.c, int))),
                            shape=(m, n))
        mat.sum_duplicates()
        return mat, np.asarray(self.k, float)


def _indicator(owner, m_rows: int) -> sp.csr_matrix:
    owner = np.asarray(owner, int)
    return sp.csr_matrix((np.ones(len(owner)), (owner, np.arange(len(owner)))), shape=(m_rows, len(owner)))


class CompiledProgram:
    """Batched barrier oracle for a :class:`ConvexProgram`."""

    def __init__(self, p: ConvexProgram):
        n = self.n = p.n
        self.c = p.c_vector()
        lo = np.asarray(p.lower, float)
        hi = np.asarray(p.upper, float)
        self.ilo = np.flatnonzero(np.isfinite(lo))
        self.ihi = np.flatnonzero(np.isfinite(hi))
        self.lo = lo[self.ilo]
        self.hi = hi[self.ihi]

        aff, eq = _Rows(), _Rows()
        lg_lin, lg_terms = _Rows(), _Rows()
        term_owner, term_coef = [], []
        rat_owner, rat_var, rat_coef = [], [], []
        qy, qz, qw = _Rows(), _Rows(), _Rows()
        qw_owner = []
        nt, nw = _Rows(), _Rows()
        nw_owner = []
        # kind and row of each atom, in program order, for slack reporting
        self.order = []

        for a in p.atoms:
            if isinstance(a, Affine):
                if a.sense == "<=":
                    self.order.append(("aff", aff.add(a.a, -a.b, -1.0)))
                elif a.sense == ">=":
                    self.order.append(("aff", aff.add(a.a, -a.b)))
                else:
                    self.order.append(("eq", eq.add(a.a, -a.b)))
            elif isinstance(a, (LogAffine, LogRatio)):
                if isinstance(a, LogRatio):
                    a = LogAffine((), a.lin, ((a.coef, a.var),), a.tag)
                k = lg_lin.add(a.lin.coeffs, a.lin.const)
                for t in a.terms:
                    lg_terms.add(t.arg.coeffs, t.arg.const)
                    term_owner.append(k)
                    term_coef.append(t.coef)
                for cf, i in a.ratios:
                    rat_owner.append(k)
                    rat_var.append(i)
                    rat_coef.append(cf)
                self.order.append(("log", k))
            elif isinstance(a, QuadOverAffine):
                k = qy.add(a.left.coeffs, a.left.const)
                qz.add(a.right.coeffs, a.right.const)
                for r in a.rows:
                    qw.add(r.coeffs, r.const)
                    qw_owner.append(k)
                self.order.append(("quad", k))
            elif isinstance(a, NormAffine):
                k = nt.add(a.bound.coeffs, a.bound.const)
                for r in a.rows:
                    nw.add(r.coeffs, r.const)
                    nw_owner.append(k)
                self.order.append(("norm", k))
            else:
                raise TypeError(f"unsupported atom {type(a).__name__}")

        self.A, self.b = aff.build(n)            # F = A x + b > 0
        self.Aeq, self.beq = eq.build(n)         # Aeq x + beq = 0
        self.D, self.e = lg_lin.build(n)
        self.B, self.b0 = lg_terms.build(n)
        self.tc = np.asarray(term_coef, float)
        n_log = len(self.e)
        self.Mt = _indicator(term_owner, n_log)
        self.t_owner = np.asarray(term_owner, int)
        self.rv = np.asarray(rat_var, int)
        self.rc = np.asarray(rat_coef, float)
        self.r_owner = np.asarray(rat_owner, int)
        self.Mr = _indicator(rat_owner, n_log)
        self.E = sp.csr_matrix((np.ones(len(rat_var)), (np.arange(len(rat_var)), self.rv)),
                               shape=(len(rat_var), n))
        self.Cy, self.y0 = qy.build(n)
        self.Cz, self.z0 = qz.build(n)
        self.Qw, self.qw0 = qw.build(n)
        self.qw_owner = np.asarray(qw_owner, int)
        self.Mq = _indicator(qw_owner, len(self.y0))
        self.Ct, self.t0 = nt.build(n)
        self.Nw, self.nw0 = nw.build(n)
        self.nw_owner = np.asarray(nw_owner, int)
        self.Mn = _indicator(nw_owner, len(self.t0))

        self.theta = (len(self.ilo) + len(self.ihi) + len(self.b) + n_log
                      + 2 * len(self.y0) + 2 * len(self.t0))

    # -- evaluation --------------------------------------------------------
    def _parts(self, x):
        """Atom values at ``x``, or ``None`` outside the barrier domain."""
        with np.errstate(all="ignore"):
            slo = x[self.ilo] - self.lo
            shi = self.hi - x[self.ihi]
            if np.any(slo <= 0) or np.any(shi <= 0):
                return None
            fa = self.A @ x + self.b
            if np.any(fa <= 0):
                return None
            arg = self.B @ x + self.b0
            u = x[self.rv]
            if np.any(arg <= 0) or np.any(u <= 0):
                return None
            fl = self.D @ x + self.e
            if len(arg):
                fl = fl + self.Mt @ (self.tc * np.log(arg))
            if len(u):
                fl = fl + self.Mr @ (self.rc * (np.log(u) - np.log1p(u)))
            if np.any(fl <= 0):
                return None
            y = self.Cy @ x + self.y0
            z = self.Cz @ x + self.z0
            w = self.Qw @ x + self.qw0
            fq = y * z - self.Mq @ (w * w)
            if np.any(y <= 0) or np.any(z <= 0) or np.any(fq <= 0):
                return None
            t = self.Ct @ x + self.t0
            wn = self.Nw @ x + self.nw0
            fn = t * t - self.Mn @ (wn * wn)
            if np.any(t <= 0) or np.any(fn <= 0):
                return None
        parts = dict(slo=slo, shi=shi, fa=fa, arg=arg, u=u, fl=fl, y=y, z=z, w=w, fq=fq, t=t, wn=wn, fn=fn)
        if not all(np.all(np.isfinite(v)) for v in parts.values()):
            return None
        return parts

    def barrier(self, x) -> float:
        pt = self._parts(x)
        if pt is None:
            return math.inf
        return self._phi(pt)

    @staticmethod
    def _phi(pt) -> float:
        return -float(sum(np.sum(np.log(pt[k])) for k in ("slo", "shi", "fa", "fl", "fq", "fn")))

    def derivatives(self, x, pt):
        """Gradient and Hessian (CSC) of the barrier at ``x``."""
        n = self.n
        g = np.zeros(n)
        g[self.ilo] -= 1.0 / pt["slo"]
        g[self.ihi] += 1.0 / pt["shi"]
        hd = np.zeros(n)
        hd[self.ilo] += 1.0 / pt["slo"] ** 2
        hd[self.ihi] += 1.0 / pt["shi"] ** 2
        H = sp.diags(hd, format="csr")

        if len(pt["fa"]):
            inv = 1.0 / pt["fa"]
            g -= self.A.T @ inv
            H = H + self.A.T @ sp.diags(inv * inv) @ self.A

        fl = pt["fl"]
        if len(fl):
            arg, u = pt["arg"], pt["u"]
            J = self.D.copy()
            if len(arg):
                J = J + self.Mt @ sp.diags(self.tc / arg) @ self.B
            if len(u):
                hp = 1.0 / u - 1.0 / (1.0 + u)
                J = J + self.Mr @ sp.diags(self.rc * hp) @ self.E
            inv = 1.0 / fl
            g -= J.T @ inv
            H = H + J.T @ sp.diags(inv * inv) @ J
            if len(arg):
                H = H + self.B.T @ sp.diags(self.tc / (arg * arg * fl[self.t_owner])) @ self.B
            if len(u):
                hpp = -1.0 / (u * u) + 1.0 / (1.0 + u) ** 2
                H = H - self.E.T @ sp.diags(self.rc * hpp / fl[self.r_owner]) @ self.E

        fq = pt["fq"]
        if len(fq):
            y, z, w = pt["y"], pt["z"], pt["w"]
            J = sp.diags(z) @ self.Cy + sp.diags(y) @ self.Cz - 2.0 * self.Mq @ sp.diags(w) @ self.Qw
            inv = 1.0 / fq
            g -= J.T @ inv
            cross = self.Cy.T @ sp.diags(inv) @ self.Cz
            H = (H + J.T @ sp.diags(inv * inv) @ J - cross - cross.T
                 + 2.0 * self.Qw.T @ sp.diags(inv[self.qw_owner]) @ self.Qw)

        fn = pt["fn"]
        if len(fn):
            t, wn = pt["t"], pt["wn"]
            J = 2.0 * sp.diags(t) @ self.Ct - 2.0 * self.Mn @ sp.diags(wn) @ self.Nw
            inv = 1.0 / fn
            g -= J.T @ inv
            H = (H + J.T @ sp.diags(inv * inv) @ J - 2.0 * self.Ct.T @ sp.diags(inv) @ self.Ct
                 + 2.0 * self.Nw.T @ sp.diags(inv[self.nw_owner]) @ self.Nw)
        return np.asarray(g).ravel(), sp.csc_matrix(H)

    def slacks(self, x) -> np.ndarray:
        """Per-atom slack in program order, in the same units as the dense evaluator."""
        x = np.asarray(x, float)
        fa = self.A @ x + self.b
        feq = self.Aeq @ x + self.beq
        with np.errstate(all="ignore"):
            arg = self.B @ x + self.b0
            u = x[self.rv]
            fl = self.D @ x + self.e
            if len(arg):
                fl = fl + self.Mt @ (self.tc * np.log(arg))
            if len(u):
                fl = fl + self.Mr @ (self.rc * (np.log(u) - np.log1p(u)))
        y = self.Cy @ x + self.y0
        z = self.Cz @ x + self.z0
        w = self.Qw @ x + self.qw0
        fq = y * z - self.Mq @ (w * w)
        t = self.Ct @ x + self.t0
        wn = self.Nw @ x + self.nw0
        fn = t - np.sqrt(self.Mn @ (wn * wn))
        table = {"aff": fa, "eq": -np.abs(feq), "log": fl, "quad": fq, "norm": fn}
        return np.array([table[k][i] for k, i in self.order], float)


# --------------------------------------------------------------------------
# Newton machinery

def _newton_direction(H, g, Aeq):
    """Solve the (possibly equality-constrained) Newton system, regularizing on failure."""
    n = H.shape[0]
    m = Aeq.shape[0]
    scale = max(float(np.max(np.abs(H.diagonal()))) if n else 1.0, 1e-300)
    for reg in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
        Hr = H + sp.identity(n, format="csc") * (reg * scale) if reg else H
        if m:
            K = sp.bmat([[Hr, Aeq.T], [Aeq, None]], format="csc")
            rhs = np.concatenate([-g, np.zeros(m)])
        else:
            K, rhs = Hr, -g
        try:
            with np.errstate(all="ignore"):
                sol = spla.spsolve(K, rhs)
        except RuntimeError:
            continue
        sol = np.atleast_1d(np.asarray(sol, float))
        if np.all(np.isfinite(sol)):
            dx = sol[:n]
            dec = float(-g @ dx)
            if dec >= -1e-12 * max(1.0, float(np.abs(g) @ np.abs(dx))):
                return dx, max(dec, 0.0)
    return None, None


def solve(p: ConvexProgram, opts: SolverOptions | None = None, x0=None) -> SolveReport:
    """Maximize ``p.objective`` starting from ``x0`` (default: the program's warm start)."""
    opts = opts or SolverOptions()
    cp = CompiledProgram(p)
    x = np.asarray(p.warm_start() if x0 is None else x0, float).copy()
    trace = []
    c = cp.c

    def report(status, xx, stages, newton, mu):
        obj = float(c @ xx)
        viol, _ = check_feasibility(p, xx)
        resid = cp.theta * mu / max(1.0, abs(obj)) if mu is not None else math.inf
        if status == OPTIMAL and not (viol <= opts.feas_tol and resid <= opts.kkt_tol):
            status = MAX_ITER
        return SolveReport(status, xx, obj, float(viol), float(resid), stages, newton, trace)

    if x.shape != (cp.n,):
        raise ValueError(f"start point has shape {x.shape}, expected ({cp.n},)")
    pt = cp._parts(x)
    eq_res = cp.Aeq @ x + cp.beq
    if pt is None or (len(eq_res) and np.max(np.abs(eq_res)) > opts.feas_tol):
        log.debug("warm start outside the barrier interior")
        return report(INFEASIBLE_START, x, 0, 0, None)

    x_start = x.copy()
    obj_start = float(c @ x)
    mu = opts.mu0
    stages = newton_total = 0
    stage_converged = False
    accepted = True
    recenters = 0
    while True:
        stages += 1
        stage_converged = False
        for it in range(opts.max_newton):
            pt = cp._parts(x)
            g_phi, H = cp.derivatives(x, pt)
            g = -c / mu + g_phi
            dx, dec = _newton_direction(H, g, cp.Aeq)
            if dx is None:
                log.debug("Newton system unsolvable at stage %d", stages)
                return report(NUMERICAL_FAILURE, x, stages, newton_total, mu)
            newton_total += 1
            trace.append({"stage": stages, "mu": mu, "newton": it, "objective": float(c @ x),
                          "decrement": dec, "gap": cp.theta * mu})
            if dec / 2.0 <= opts.newton_tol:
                stage_converged = True
                break
            f0 = -float(c @ x) / mu + cp._phi(pt)
            step = 1.0
            accepted = False
            for _ in range(80):
                xn = x + step * dx
                ptn = cp._parts(xn)
                if ptn is not None:
                    fn = -float(c @ xn) / mu + cp._phi(ptn)
                    if math.isfinite(fn) and fn <= f0 - 0.01 * step * dec:
                        accepted = True
                        break
                step *= 0.5
            if not accepted:
                # no descent possible in floating point: the stage is as centered as it gets
                stage_converged = dec < 1e-6
                break
            x = xn
        if not np.all(np.isfinite(x)):
            return report(NUMERICAL_FAILURE, x_start, stages, newton_total, mu)
        obj = float(c @ x)
        if stages >= opts.max_stages:
            break
        if not stage_converged and accepted and recenters < MAX_RECENTER:
            # Newton budget ran out while still making progress: keep centering at this mu
            recenters += 1
            continue
        recenters = 0
        if cp.theta * mu <= opts.kkt_tol * max(1.0, abs(obj)) or cp.theta == 0:
            break
        mu *= opts.reduction

    status = OPTIMAL if stage_converged else MAX_ITER
    if float(c @ x) < obj_start - opts.feas_tol:
        # the barrier path ended below the start; keep the start (still interior)
        x = x_start
    return report(status, x, stages, newton_total, mu)
