"""Time the compiled and pure-Python Lotka-Volterra RK45 solvers on the predator-prey setup.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import timeit

import numpy as np

from mlda import kernels
from mlda.problems.predator_prey import TRUE_PARAMETERS


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=50)
    args = parser.parse_args()

    times = np.arange(0.0, 12.01, 0.5)
    routes = {"python": kernels.solve_lotka_volterra_python}
    if kernels.HAVE_COMPILED:
        routes["compiled"] = kernels.solve_lotka_volterra_compiled
    else:
        print("compiled kernel not built; timing the Python route only")

    best = {}
    for name, solve in routes.items():
        runs = timeit.repeat(lambda solve=solve: solve(TRUE_PARAMETERS, times, 12.0, 1e-6, 1e-8),
                             repeat=args.repeat, number=args.number)
        best[name] = min(runs) / args.number
        print(f"{name:>8}: {best[name] * 1e6:10.1f} us per solve")
    if len(best) == 2:
        print(f" speedup: {best['python'] / best['compiled']:10.1f}x")
        gap = np.max(np.abs(routes["python"](TRUE_PARAMETERS, times, 12.0, 1e-6, 1e-8)
                            - routes["compiled"](TRUE_PARAMETERS, times, 12.0, 1e-6, 1e-8)))
        print(f" max |python - compiled| = {gap:.1e}")


if __name__ == "__main__":
    main()
