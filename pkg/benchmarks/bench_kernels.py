"""Compare the compiled and numpy kernel backends.

Times each hot kernel on n x n data, then one full subproblem solve and one
augmented Lagrangian step at n = 500, once per available backend.

    python benchmarks/bench_kernels.py [--n 500] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from lrsd import kernels
from lrsd.alm import alm_update_L, alm_update_S
from lrsd.linalg import ObservationMask
from lrsd.pspg import solve_subproblem
from lrsd.smoothing import default_xi


def cases(n, rng):
    q, D = rng.standard_normal((2, n, n))
    mask = ObservationMask(rng.random((n, n)) < 0.9)
    xi = default_xi(n, n)
    a = np.sort(np.abs((D - q)[mask.array]))
    delta = 0.3 * float(np.linalg.norm(a))
    S0 = rng.standard_normal((n, n))
    L1 = alm_update_L(S0, np.where(mask.array, D, 0.0), 1.0, 1.0, 0.1, xi, mask)
    return {
        "soft_threshold": lambda: kernels.soft_threshold(D, 0.5),
        "alm_shrink": lambda: kernels.alm_shrink(D, mask, 0.5, 0.1, xi),
        "pspg_assemble": lambda: kernels.pspg_assemble(q, D, mask, 0.3, 0.6),
        "theta_bracket": lambda: kernels.theta_bracket(a, xi, 0.7, delta),
        "solve_subproblem": lambda: solve_subproblem(q, D, mask, xi, 0.7, delta),
        "alm_update_S": lambda: alm_update_S(L1, D, 1.0, 1.0, 0.1, xi, mask),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = kernels.available_backends()
    previous = kernels.backend()
    times = {}
    for name in backends:
        kernels.use_backend(name)
        for label, fn in cases(args.n, np.random.default_rng(0)).items():
            fn()  # warm up
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            times.setdefault(label, {})[name] = best
    kernels.use_backend(previous)
    header = f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(f"n = {args.n}, best of {args.repeat} (ms)")
    print(header)
    for label, row in times.items():
        line = f"{label:<18}" + "".join(f"{1e3 * row[b]:>12.3f}" for b in backends)
        if len(backends) == 2:
            line += f"{row['python'] / row['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
