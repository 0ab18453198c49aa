"""Compare the compiled and pure-Python tape evaluators.

Run:  python3 benchmarks/bench_eval.py [n_points]

Uses the bracket coefficients of a bundled system as a realistic workload
and reports per-backend throughput plus the max deviation between the two.
"""

import sys
import time

import numpy as np

from quadralg import catalog
from quadralg.evaluation import compile_exprs
from quadralg.observables import poisson_bracket
from quadralg import _evalpy

try:
    from quadralg import _evalcore
except ImportError:
    _evalcore = None


def workload():
    system = catalog.builtin("sphere_1param", verify=False)
    h = system.hamiltonian()
    exprs = []
    for name, obs in system.symmetries.items():
        exprs.extend(obs.terms.values())
        exprs.extend(poisson_bracket(h, obs).terms.values())
    return compile_exprs(exprs)


def run_backend(backend, tape, slots0, repeats=20):
    best = float("inf")
    out = None
    for _ in range(repeats):
        slots = slots0.copy()
        t0 = time.perf_counter()
        with np.errstate(all="ignore"):
            backend.run(tape.ops, tape.dest, tape.arg1, tape.arg2, slots)
        best = min(best, time.perf_counter() - t0)
        out = slots
    return best, out


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 10000
    tape = workload()
    rng = np.random.default_rng(20090120)
    slots0 = np.zeros((tape.n_slots, n), dtype=np.complex128)
    for s, v in tape.const_slots:
        slots0[s] = v
    for name, s in tape.var_slots.items():
        slots0[s] = (rng.uniform(0.3, 1.2, n)
                     + 1j * rng.uniform(-0.1, 0.1, n))

    t_py, out_py = run_backend(_evalpy, tape, slots0)
    print(f"workload: {len(tape.ops)} instructions, {n} points")
    print(f"python   backend: {t_py * 1e3:8.3f} ms "
          f"({len(tape.ops) * n / t_py / 1e6:8.1f} Mop/s)")
    if _evalcore is None:
        print("compiled backend: not built")
        return
    t_c, out_c = run_backend(_evalcore, tape, slots0)
    roots_py = out_py[tape.roots]
    roots_c = out_c[tape.roots]
    dev = float(np.nanmax(np.abs(roots_py - roots_c)))
    print(f"compiled backend: {t_c * 1e3:8.3f} ms "
          f"({len(tape.ops) * n / t_c / 1e6:8.1f} Mop/s)")
    print(f"speedup: {t_py / t_c:.2f}x   max |python - compiled| = {dev:.3e}")


if __name__ == "__main__":
    main()
