"""Command-line front end: ``run``, ``sweep`` and ``verify``.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 internal error.
Set ``SPCRELAY_LOG`` (e.g. ``INFO`` or ``DEBUG``) for progress logging.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels, oracle, secrecy
from .planner import SCHEMES, PlannerError, initial_feasible, run_scheme
from .scenario import (Scenario, ScenarioParseError, ScenarioValidationError, check, load_scenario,
                       _toml)

log = logging.getLogger("spcrelay")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_INTERNAL = 0, 2, 3, 4

TRACE_COLUMNS = ("iteration", "east")
PROFILE_COLUMNS = ("slot", "x", "y", "z", "v_xy", "v_z", "p_a", "p_r", "l_u", "l_d",
                   "r_u_fbl", "r_d_fbl", "r_u_inf", "r_d_inf", "b_s")
SWEEP_COLUMNS = ("value", "scheme", "east", "iterations", "wall_time", "status", "error")
SWEEP_KEYS = {"l_max": int, "eve_uncertainty": float, "mission_time": float,
              "eps_r": float, "eps_b": float, "eta_e": float}


class InputError(ValueError):
    pass


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(v) if isinstance(v, (int, float, np.integer, np.floating)) else v for v in r])
    return buf.getvalue()


def _error_record(kind: str, message: str, code: int, out: Path | None = None, **extra) -> int:
    rec = {"error": kind, "message": message, "exit_code": code, **extra}
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            _atomic_write(out / "error.json", json.dumps(rec, indent=2, sort_keys=True) + "\n")
        except OSError:
            pass
    return code


def _load(path, seed=None) -> Scenario:
    s = load_scenario(path)
    if seed is not None:
        s = s.replace(rng_seed=int(seed))
    return s


# --------------------------------------------------------------------------
# run

def write_run(out: Path, s: Scenario, res) -> None:
    tr = res.trace
    _atomic_write(out / "trace.csv", _csv_text(TRACE_COLUMNS, list(enumerate(tr.east))))
    pr = res.profiles
    rows = zip(*(pr[c] for c in PROFILE_COLUMNS))
    _atomic_write(out / "profiles.csv", _csv_text(PROFILE_COLUMNS, rows))
    doc = {
        "scheme": res.scheme,
        "status": "converged" if res.converged else "max_iter",
        "east": res.east,
        "relaxed_east": res.relaxed_east,
        "iterations": tr.iterations,
        "n_slots": s.n_slots,
        "timings": {"total_s": res.elapsed, "per_iteration_s": list(np.diff(tr.wall_time))},
        "kernel_backend": kernels.BACKEND,
    }
    _atomic_write(out / "result.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    out = Path(args.out)
    try:
        s = _load(args.scenario, args.seed)
    except (ScenarioParseError, ScenarioValidationError, OSError) as e:
        return _error_record("validation", str(e), EXIT_INPUT, out)
    if args.scheme not in SCHEMES:
        return _error_record("validation", f"unknown scheme {args.scheme!r}", EXIT_INPUT, out)
    try:
        res = run_scheme(s, args.scheme)
    except PlannerError as e:
        return _error_record("solver", str(e), EXIT_SOLVER, out, iteration=e.iteration, block=e.block)
    write_run(out, s, res)
    print(f"{args.scheme}: EAST {res.east:.6f} bits/s after {res.trace.iterations} iterations")
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep

@dataclass(frozen=True)
class SweepSpec:
    key: str
    values: tuple
    schemes: tuple

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        try:
            data = _toml.loads(text)
        except _toml.TOMLDecodeError as e:
            raise InputError(f"sweep spec: {e}") from None
        unknown = set(data) - {"key", "values", "schemes"}
        if unknown:
            raise InputError(f"sweep spec: unknown keys {sorted(unknown)}")
        key = data.get("key")
        if key not in SWEEP_KEYS:
            raise InputError(f"sweep spec: key must be one of {sorted(SWEEP_KEYS)}")
        values = data.get("values")
        if not isinstance(values, list) or not values:
            raise InputError("sweep spec: values must be a nonempty list")
        schemes = data.get("schemes", ["jtrd"])
        if not isinstance(schemes, list) or not schemes:
            raise InputError("sweep spec: schemes must be a nonempty list")
        bad = [x for x in schemes if x not in SCHEMES]
        if bad:
            raise InputError(f"sweep spec: unknown schemes {bad}")
        try:
            values = tuple(SWEEP_KEYS[key](v) for v in values)
        except (TypeError, ValueError):
            raise InputError(f"sweep spec: values for {key} must be numbers") from None
        return cls(key, values, tuple(schemes))

    def scenarios(self, base: Scenario) -> list[Scenario]:
        out = []
        for v in self.values:
            s = base.replace(**{self.key: v})
            try:
                check(s)
            except ScenarioValidationError as e:
                raise InputError(f"sweep value {self.key} = {v}: {e}") from None
            out.append(s)
        return out


def _run_cell(s: Scenario, value, scheme: str, cell_path: str) -> dict:
    t0 = time.perf_counter()
    try:
        res = run_scheme(s, scheme)
        row = dict(value=value, scheme=scheme, east=res.east, iterations=res.trace.iterations,
                   status="ok", error="")
    except Exception as e:  # a failed cell is recorded, the sweep carries on
        row = dict(value=value, scheme=scheme, east=math.nan, iterations=0, status="failed",
                   error=f"{type(e).__name__}: {e}")
    row["wall_time"] = time.perf_counter() - t0
    _atomic_write(Path(cell_path), json.dumps(row, sort_keys=True) + "\n")
    return row


def cmd_sweep(args) -> int:
    out = Path(args.out)
    try:
        base = _load(args.scenario, args.seed)
        spec = SweepSpec.parse(Path(args.spec).read_text(encoding="utf-8"))
        cells = spec.scenarios(base)
    except (ScenarioParseError, ScenarioValidationError, InputError, OSError) as e:
        return _error_record("validation", str(e), EXIT_INPUT, out)

    jobs = []
    for v, s in zip(spec.values, cells):
        for sch in spec.schemes:
            jobs.append((s, v, sch, str(out / "cells" / f"{spec.key}={_num(v)}__{sch}.json")))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_run_cell, *zip(*jobs)))
    else:
        rows = [_run_cell(*j) for j in jobs]

    _atomic_write(out / "sweep.csv", _csv_text(SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rows]))
    failed = sum(r["status"] != "ok" for r in rows)
    for r in rows:
        print(f"{spec.key}={_num(r['value'])} {r['scheme']}: "
              + (f"EAST {r['east']:.6f}" if r["status"] == "ok" else f"FAILED ({r['error']})"))
    if failed == len(rows):
        return _error_record("solver", "every sweep cell failed", EXIT_SOLVER, out)
    return EXIT_OK


# --------------------------------------------------------------------------
# verify

def verify_checks(s: Scenario, seed: int = 0) -> list[tuple[str, bool, str]]:
    """Quick self-checks on a scenario; returns ``(name, passed, detail)`` rows."""
    from . import program as P
    from .program import ConvexProgram, Lin, LogAffine, LogTerm, NormAffine, Affine
    from .radio import slot_snrs
    from .solver import solve

    rng = np.random.Generator(np.random.PCG64(seed))
    rows = []

    # tangent/linearization helpers
    xs = np.logspace(-4, 4, 81)
    err = 0.0
    for k in (0.01, 1.0, 100.0):
        for x in xs:
            h = 1e-6 * x
            fd = (P.a0(x + h, k) - P.a0(x - h, k)) / (2 * h)
            err = max(err, abs(fd - P.a1(x, k)) / max(1.0, abs(P.a1(x, k))))
    rows.append(("a1 matches finite-difference derivative of a0", err <= 1e-5, f"max rel err {err:.2e}"))

    q = rng.uniform(0.01, 100.0, size=(10_000, 4))
    gap = np.min(1.0 / (q[:, 0] * q[:, 1]) - P.f_lb(q[:, 0], q[:, 1], q[:, 2], q[:, 3]))
    rows.append(("f_lb is a global lower bound of 1/(xy)", gap >= -1e-12, f"min gap {gap:.2e}"))

    worst = math.inf
    for fid in P.CONCAVE_FUNCTIONS:
        for _ in range(1000):
            x0, x = rng.uniform(1e-3, 1e3, 2)
            sl, ic = P.tangent_of_concave(fid, x0, 1.0)
            f = P.CONCAVE_FUNCTIONS[fid][0]
            worst = min(worst, sl * x + ic - f(x, 1.0))
    rows.append(("tangent lines dominate their concave functions", worst >= -1e-9, f"min gap {worst:.2e}"))

    # solver micro-oracles
    p = ConvexProgram()
    x = p.add_var("x", 0.0, 1.0, 0.5)
    t = p.add_var("t", warm=0.0)
    p.add(LogAffine((LogTerm(1.0, Lin({x: 1.0}, 1.0)),), Lin({t: -1.0})))
    p.maximize({t: 1.0})
    r = solve(p)
    rows.append(("solver: max t s.t. ln(1+x) >= t, x in [0,1]", abs(r.objective - math.log(2)) <= 1e-5,
                 f"{r.objective:.7f} vs {math.log(2):.7f}"))
    p = ConvexProgram()
    x = p.add_var("x", warm=0.0)
    y = p.add_var("y", warm=0.0)
    t = p.add_var("t", warm=-1.0)
    p.add(NormAffine((Lin({x: 1.0}), Lin({y: 1.0})), Lin({}, 1.0)))
    p.add(Affine({t: 1.0, x: -1.0, y: -1.0}, 0.0))
    p.maximize({t: 1.0})
    r = solve(p)
    rows.append(("solver: max x+y on the unit disc", abs(r.objective - math.sqrt(2)) <= 1e-5,
                 f"{r.objective:.7f} vs {math.sqrt(2):.7f}"))

    # worst-case Eve bound on the initial plan
    dv = initial_feasible(s)
    m = oracle.sampled_bound_audit(s, dv, 10_000, seed)
    if s.eve_uncertainty == 0:
        rows.append(("bound audit margin is exactly 0 (no uncertainty)", abs(m) <= 1e-12, f"margin {m:.3e}"))
    else:
        rows.append(("bound audit: sampled Eve never beats the worst case", m >= -1e-9, f"margin {m:.3e}"))

    # Monte-Carlo check of the fading lower bound on a few slots
    snr = slot_snrs(s, dv.q, dv.p_a, dv.p_r)
    r_lb = np.atleast_1d(secrecy.uplink_rate_lb(snr, dv.l_u, s.eps_r, s.eta_e))
    ok, detail = True, ""
    for n in np.linspace(0, s.n_slots - 1, min(5, s.n_slots)).astype(int):
        est, se = secrecy.mc_uplink_rate(s, dv.q[n], float(dv.p_a[n]), float(dv.l_u[n]), 100_000, seed, int(n))
        ok &= est >= r_lb[n] - 3 * se
        detail = f"slot {n}: MC {est:.4f} ± {se:.4f} vs bound {r_lb[n]:.4f}"
    rows.append(("Monte-Carlo uplink rate >= closed-form bound", bool(ok), detail))

    # compiled and numpy kernels agree
    if kernels.compiled_backend is not None:
        u = rng.random(4096)
        a = kernels.compiled_backend.mc_clipped_moments(u, 50.0, 1.0, 200.0, 3.09, 2.33)
        b = kernels.python_backend.mc_clipped_moments(u, 50.0, 1.0, 200.0, 3.09, 2.33)
        same = abs(a[0] - b[0]) <= 1e-9 * max(1.0, abs(b[0]))
        rows.append(("compiled and numpy kernels agree", same, f"{a[0]:.12g} vs {b[0]:.12g}"))
    return rows


def cmd_verify(args) -> int:
    try:
        s = _load(args.scenario, args.seed)
    except (ScenarioParseError, ScenarioValidationError, OSError) as e:
        return _error_record("validation", str(e), EXIT_INPUT)
    try:
        rows = verify_checks(s, s.rng_seed)
    except Exception as e:
        return _error_record("internal", f"{type(e).__name__}: {e}", EXIT_INTERNAL)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name.ljust(width)}  {detail}")
    return EXIT_OK if all(r[1] for r in rows) else EXIT_INTERNAL


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spcrelay", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="optimize one scenario with one scheme")
    r.add_argument("scenario")
    r.add_argument("--scheme", default="jtrd", help="jtrd, rdft, tdfr or initial")
    r.add_argument("--out", default="out")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    w = sub.add_parser("sweep", help="sweep one scenario key over a list of values")
    w.add_argument("scenario")
    w.add_argument("spec", help="TOML file with key, values and schemes")
    w.add_argument("--out", default="out")
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--seed", type=int)
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run oracle and invariant self-checks")
    v.add_argument("scenario")
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("SPCRELAY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AssertionError as e:
        return _error_record("internal", f"assertion failed: {e}", EXIT_INTERNAL)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
