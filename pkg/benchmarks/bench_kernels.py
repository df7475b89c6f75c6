"""Time the compiled core against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from spcrelay import _pykernels
from spcrelay import kernels


def grid_case(n_p=200, l_max=1000, seed=0):
    rng = np.random.default_rng(seed)
    pa = np.linspace(0.0, 0.1, n_p)
    pr = np.linspace(0.0, 0.1, n_p)
    cap_u = np.log2(1 + pa * 3e4) - np.log2(1 + pa * 5.0)
    cap_d = np.log2(1 + pr * 2e4) - np.log2(1 + pr * 3.0)
    pen_u = rng.uniform(0, 3, n_p)
    pen_d = rng.uniform(0, 3, n_p)
    return (cap_u, pen_u, pa, cap_d, pen_d, pr, l_max, 50.0, 50.0, 1e-3, 1e-3)


def mc_case(n=1_000_000, seed=0):
    u = np.random.default_rng(seed).random(n)
    return (u, 50.0, 1.0, 200.0, 3.09, 2.33)


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args(argv)
    cases = {"grid_best": grid_case(), "mc_clipped_moments": mc_case()}
    backends = {"python": _pykernels}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled core not built; timing the python backend only")
    print(f"{'kernel':<20}{'backend':<10}{'best [ms]':>12}{'speedup':>10}")
    for name, args in cases.items():
        base = None
        for bname, mod in backends.items():
            t = bench(getattr(mod, name), args, a.repeat)
            base = base or t
            print(f"{name:<20}{bname:<10}{1e3 * t:>12.2f}{base / t:>10.2f}")
        if len(backends) == 2:
            r_py = getattr(_pykernels, name)(*args)
            r_c = getattr(kernels.compiled_backend, name)(*args)
            ok = np.allclose(np.asarray(r_py, float), np.asarray(r_c, float), rtol=1e-9, atol=0)
            print(f"{'':<20}results agree: {ok}")


if __name__ == "__main__":
    main()
