"""Convex-program representation and the SCA linearization helpers.

A :class:`ConvexProgram` maximizes a linear objective over box-bounded
variables subject to a list of constraint atoms.  Every atom is written so
that its *slack* is nonnegative on the feasible set:

``Affine``          ``a.x <= b`` (or ``>=``, ``==``)
``LogAffine``       ``sum_j c_j ln(a_j + b_j.x) + sum_k r_k ln(u_k/(1+u_k)) + d.x + e >= 0``
``LogRatio``        ``ln(u/(1+u)) + d.x + e >= 0`` (single positive variable ``u``)
``QuadOverAffine``  ``||A x + b||^2 <= (c.x + d)(f.x + g)``, both factors positive
``NormAffine``      ``||A x + b|| <= c.x + d``

Linear forms are stored as ``{var_index: coefficient}`` dicts plus a constant.
The per-atom functions in this module (:func:`atom_slack`,
:func:`atom_violation`) are a deliberately plain evaluator; the solver uses its
own vectorized evaluation and tests check the two against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

GUARD = 1e-9  # lower bound for variables that must stay strictly positive


# --------------------------------------------------------------------------
# SCA helper functions

def a0(x: float, k: float) -> float:
    """``0.5 ln(k x (2 + k x))``, i.e. ``ln(sqrt(1 - (1+kx)^-2)) + ln(1 + kx)``."""
    if not (x > 0 and k > 0):
        raise ValueError("a0 requires x > 0 and k > 0")
    kx = k * x
    return 0.5 * (math.log(kx) + math.log(2.0 + kx))


def a1(x: float, k: float) -> float:
    """Derivative of :func:`a0` with respect to ``x``: ``(kx + 1) / (x (kx + 2))``."""
    if not (x > 0 and k > 0):
        raise ValueError("a1 requires x > 0 and k > 0")
    kx = k * x
    return (kx + 1.0) / (x * (kx + 2.0))


def f_lb(x, y, x0, y0):
    """Tangent-plane underestimator of ``1/(x y)`` at ``(x0, y0)`` (valid for all x, y > 0)."""
    if any(np.any(~(np.asarray(v) > 0)) for v in (x, y, x0, y0)):
        raise ValueError("f_lb requires positive arguments")
    return -(x * y0 + x0 * y - 3.0 * x0 * y0) / (x0 * x0 * y0 * y0)


def f_lb_coefficients(x0: float, y0: float) -> tuple[float, float, float]:
    """``(cx, cy, c0)`` with ``f_lb(x, y; x0, y0) = cx x + cy y + c0``."""
    den = x0 * x0 * y0 * y0
    return -y0 / den, -x0 / den, 3.0 * x0 * y0 / den


CONCAVE_FUNCTIONS = {
    "half_log_kx2kx": (lambda x, k: a0(x, k), lambda x, k: a1(x, k)),
    "sqrt": (lambda x, k: math.sqrt(x), lambda x, k: 0.5 / math.sqrt(x)),
    "log1p_kx": (lambda x, k: math.log1p(k * x), lambda x, k: k / (1.0 + k * x)),
}


def tangent_of_concave(fid: str, x0: float, k: float = 1.0) -> tuple[float, float]:
    """Tangent line ``slope * x + intercept`` of a concave function at ``x0``.

    The line lies above the function everywhere on its domain, which is what
    makes the linearized constraints restrictive.
    """
    try:
        f, df = CONCAVE_FUNCTIONS[fid]
    except KeyError:
        raise ValueError(f"unknown concave function {fid!r}") from None
    if fid == "sqrt":
        if not x0 > 0:
            raise ValueError("sqrt tangent requires x0 > 0")
    elif fid == "log1p_kx":
        if not (k >= 0 and 1.0 + k * x0 > 0):
            raise ValueError("log1p_kx tangent requires 1 + k x0 > 0 and k >= 0")
    elif not (x0 > 0 and k > 0):
        raise ValueError("half_log_kx2kx tangent requires x0 > 0 and k > 0")
    slope = df(x0, k)
    return slope, f(x0, k) - slope * x0


# --------------------------------------------------------------------------
# atoms

@dataclass(frozen=True)
class Lin:
    """Affine form ``sum(coeffs[i] * x[i]) + const``."""

    coeffs: dict = field(default_factory=dict)
    const: float = 0.0

    def __call__(self, x) -> float:
        return sum(c * x[i] for i, c in self.coeffs.items()) + self.const


@dataclass(frozen=True)
class LogTerm:
    """``coef * ln(arg(x))`` with ``coef > 0``."""

    coef: float
    arg: Lin


@dataclass(frozen=True)
class Affine:
    a: dict
    b: float
    sense: str = "<="
    tag: str = ""


@dataclass(frozen=True)
class LogAffine:
    terms: tuple
    lin: Lin = field(default_factory=Lin)
    ratios: tuple = ()  # (coef, var_index) pairs: coef * ln(u / (1 + u))
    tag: str = ""


@dataclass(frozen=True)
class LogRatio:
    var: int
    lin: Lin = field(default_factory=Lin)
    coef: float = 1.0
    tag: str = ""


@dataclass(frozen=True)
class QuadOverAffine:
    rows: tuple  # of Lin
    left: Lin
    right: Lin
    tag: str = ""


@dataclass(frozen=True)
class NormAffine:
    rows: tuple  # of Lin
    bound: Lin
    tag: str = ""


Atom = Union[Affine, LogAffine, LogRatio, QuadOverAffine, NormAffine]


def check_atom(atom: Atom) -> None:
    """Reject non-finite data and broken concavity certificates."""
    def fin(v):
        if not math.isfinite(v):
            raise ValueError(f"non-finite coefficient in atom {atom.tag!r}")

    def lin_ok(l: Lin):
        fin(l.const)
        for c in l.coeffs.values():
            fin(c)

    if isinstance(atom, Affine):
        fin(atom.b)
        for c in atom.a.values():
            fin(c)
        if atom.sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {atom.sense!r}")
    elif isinstance(atom, LogAffine):
        for t in atom.terms:
            fin(t.coef)
            if not t.coef > 0:
                raise ValueError(f"log term coefficient must be > 0 in {atom.tag!r}")
            lin_ok(t.arg)
        for c, _ in atom.ratios:
            fin(c)
            if not c > 0:
                raise ValueError(f"log-ratio coefficient must be > 0 in {atom.tag!r}")
        lin_ok(atom.lin)
    elif isinstance(atom, LogRatio):
        fin(atom.coef)
        if not atom.coef > 0:
            raise ValueError("log-ratio coefficient must be > 0")
        lin_ok(atom.lin)
    elif isinstance(atom, (QuadOverAffine, NormAffine)):
        for r in atom.rows:
            lin_ok(r)
        if isinstance(atom, QuadOverAffine):
            lin_ok(atom.left)
            lin_ok(atom.right)
        else:
            lin_ok(atom.bound)
    else:
        raise TypeError(f"unknown atom type {type(atom).__name__}")


def atom_slack(atom: Atom, x) -> float:
    """Slack of ``atom`` at ``x``: positive strictly inside, ``-inf`` outside the domain."""
    if isinstance(atom, Affine):
        ax = sum(c * x[i] for i, c in atom.a.items())
        if atom.sense == "<=":
            return atom.b - ax
        if atom.sense == ">=":
            return ax - atom.b
        return -abs(ax - atom.b)
    if isinstance(atom, LogRatio):
        atom = LogAffine((), atom.lin, ((atom.coef, atom.var),), atom.tag)
    if isinstance(atom, LogAffine):
        total = atom.lin(x)
        for t in atom.terms:
            v = t.arg(x)
            if not v > 0:
                return -math.inf
            total += t.coef * math.log(v)
        for c, i in atom.ratios:
            u = x[i]
            if not u > 0:
                return -math.inf
            total += c * (math.log(u) - math.log1p(u))
        return total
    if isinstance(atom, QuadOverAffine):
        y, z = atom.left(x), atom.right(x)
        w2 = sum(r(x) ** 2 for r in atom.rows)
        if y < 0 or z < 0:
            return min(y, z)
        return y * z - w2
    if isinstance(atom, NormAffine):
        t = atom.bound(x)
        return t - math.sqrt(sum(r(x) ** 2 for r in atom.rows))
    raise TypeError(f"unknown atom type {type(atom).__name__}")


def atom_violation(atom: Atom, x) -> float:
    """Amount by which ``atom`` is violated at ``x`` (<= 0 when satisfied)."""
    return -atom_slack(atom, x)


# --------------------------------------------------------------------------
# program

@dataclass
class ConvexProgram:
    """Maximize ``objective . x`` subject to variable bounds and atoms."""

    tags: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    warm: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    atoms: list = field(default_factory=list)
    blocks: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.tags)

    def add_var(self, tag: str, lo: float = -math.inf, hi: float = math.inf, warm: float = 0.0,
                block: str | None = None) -> int:
        if not lo <= hi:
            raise ValueError(f"empty bounds for {tag}")
        idx = len(self.tags)
        self.tags.append(tag)
        self.lower.append(float(lo))
        self.upper.append(float(hi))
        self.warm.append(float(warm))
        if block is not None:
            self.blocks.setdefault(block, []).append(idx)
        return idx

    def add(self, atom: Atom) -> None:
        check_atom(atom)
        self.atoms.append(atom)

    def maximize(self, coeffs: dict) -> None:
        for i, c in coeffs.items():
            self.objective[i] = self.objective.get(i, 0.0) + c

    def c_vector(self) -> np.ndarray:
        c = np.zeros(self.n)
        for i, v in self.objective.items():
            c[i] = v
        return c

    def warm_start(self) -> np.ndarray:
        return np.array(self.warm, dtype=float)

    def set_warm(self, x) -> None:
        self.warm = [float(v) for v in x]

    def block(self, name: str) -> np.ndarray:
        return np.asarray(self.blocks.get(name, []), dtype=int)

    def dump(self) -> str:
        """Human-readable listing (variables, bounds, objective, atoms) for diffing."""
        out = [f"variables {self.n}"]
        for i, t in enumerate(self.tags):
            out.append(f"  x{i} {t} in [{self.lower[i]:.12g}, {self.upper[i]:.12g}] warm={self.warm[i]:.12g}")
        out.append("maximize " + " + ".join(f"{c:.12g}*x{i}" for i, c in sorted(self.objective.items())))
        out.append(f"atoms {len(self.atoms)}")
        for a in self.atoms:
            out.append("  " + _fmt_atom(a))
        return "\n".join(out) + "\n"


def _fmt_lin(l: Lin) -> str:
    parts = [f"{c:.12g}*x{i}" for i, c in sorted(l.coeffs.items())]
    parts.append(f"{l.const:.12g}")
    return " + ".join(parts)


def _fmt_atom(a: Atom) -> str:
    if isinstance(a, Affine):
        lhs = " + ".join(f"{c:.12g}*x{i}" for i, c in sorted(a.a.items()))
        return f"AFFINE[{a.tag}] {lhs} {a.sense} {a.b:.12g}"
    if isinstance(a, LogAffine):
        logs = " + ".join(f"{t.coef:.12g}*ln({_fmt_lin(t.arg)})" for t in a.terms)
        rat = " + ".join(f"{c:.12g}*lnratio(x{i})" for c, i in a.ratios)
        body = " + ".join(p for p in (logs, rat, _fmt_lin(a.lin)) if p)
        return f"LOG_AFFINE[{a.tag}] {body} >= 0"
    if isinstance(a, LogRatio):
        return f"LOG_RATIO[{a.tag}] {a.coef:.12g}*lnratio(x{a.var}) + {_fmt_lin(a.lin)} >= 0"
    if isinstance(a, QuadOverAffine):
        rows = ", ".join(_fmt_lin(r) for r in a.rows)
        return f"QUAD_OVER_AFFINE[{a.tag}] ||({rows})||^2 <= ({_fmt_lin(a.left)})*({_fmt_lin(a.right)})"
    rows = ", ".join(_fmt_lin(r) for r in a.rows)
    return f"NORM_AFFINE[{a.tag}] ||({rows})|| <= {_fmt_lin(a.bound)}"


def bound_violations(p: ConvexProgram, x) -> np.ndarray:
    lo = np.asarray(p.lower)
    hi = np.asarray(p.upper)
    x = np.asarray(x, float)
    return np.maximum(lo - x, x - hi)


def check_feasibility(p: ConvexProgram, x) -> tuple[float, list]:
    """Max violation over bounds and atoms plus a per-atom breakdown.

    The breakdown is a list of ``(kind, tag, violation)``; bounds appear as
    ``("BOUND", variable_tag, violation)``.
    """
    x = np.asarray(x, float)
    if x.shape != (p.n,):
        raise ValueError(f"point has shape {x.shape}, program has {p.n} variables")
    rows = []
    for i, v in enumerate(bound_violations(p, x)):
        rows.append(("BOUND", p.tags[i], float(v)))
    for a in p.atoms:
        rows.append((type(a).__name__, a.tag, float(atom_violation(a, x))))
    worst = max((r[2] for r in rows), default=-math.inf)
    return worst, rows
