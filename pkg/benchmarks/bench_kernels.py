"""Compare the numpy and compiled kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Times the closed-loop vector field (the integrator's inner call) and the
pinned dynamics terms on a fixed set of on-manifold states, then one
full-order step with each backend.
"""

import argparse
import json
import time
from contextlib import contextmanager

import numpy as np

from thrusthzd import kernels
from thrusthzd.control import Gains
from thrusthzd.gait import manifold_configuration, nominal_gait
from thrusthzd.model import ModelParams


def _states(g, n=200):
    rng = np.random.default_rng(0)
    out = []
    for a in np.linspace(g.alpha_i, g.alpha_f, n):
        q, dq, _ = manifold_configuration(a, g)
        out.append((q + 1e-3 * rng.standard_normal(3), dq * 1.5 + 1e-2 * rng.standard_normal(3)))
    return out


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


@contextmanager
def _backend(name):
    saved = kernels.pinned_terms, kernels.closed_loop
    mod = kernels.backend_module(name)
    kernels.pinned_terms, kernels.closed_loop = mod.pinned_terms, mod.closed_loop
    try:
        yield mod
    finally:
        kernels.pinned_terms, kernels.closed_loop = saved


def run(repeat=5):
    from thrusthzd.hybrid import _restricted_guess, simulate_step

    p, g, k = ModelParams(), nominal_gait(), Gains.from_epsilon()
    states = _states(g)
    args = p.consts.kernel_args()
    cl_args = args + (g.c, g.A, g.alpha_i, g.alpha_f, k.Kp, k.Kd)
    x0, _ = _restricted_guess(0.0, g, p)
    results = {}
    names = ["python"]
    try:
        kernels.backend_module("cython")
        names.append("cython")
    except ImportError:
        print("compiled backend not built; timing the numpy kernels only")
    for name in names:
        with _backend(name) as mod:
            t_pin = _best(lambda: [mod.pinned_terms(q, qd, *args) for q, qd in states], repeat)
            t_cl = _best(lambda: [mod.closed_loop(q, qd, -10.0, 0.0, 0, *cl_args) for q, qd in states],
                         repeat)
            t_step = _best(lambda: simulate_step(x0, 0.0, g, k, p), max(1, repeat // 2))
        results[name] = {"pinned_terms_us": 1e6 * t_pin / len(states),
                         "closed_loop_us": 1e6 * t_cl / len(states),
                         "full_step_ms": 1e3 * t_step}
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args()
    res = run(args.repeat)
    print(f"{'backend':<8} {'pinned [us]':>12} {'closed loop [us]':>17} {'step [ms]':>10}")
    for name, r in res.items():
        print(f"{name:<8} {r['pinned_terms_us']:12.2f} {r['closed_loop_us']:17.2f} {r['full_step_ms']:10.1f}")
    if "cython" in res:
        py, cy = res["python"], res["cython"]
        print(f"speedup: closed loop x{py['closed_loop_us'] / cy['closed_loop_us']:.1f}, "
              f"step x{py['full_step_ms'] / cy['full_step_ms']:.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(res, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
