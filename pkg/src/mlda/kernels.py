"""Hot numerical kernels, compiled when available.

The compiled extension is used unless it failed to build or the environment
variable ``MLDA_PURE_PYTHON`` is set to a non-empty value other than ``0``;
``BACKEND`` records which route is active.
"""

import os

import numpy as np

from .problems.ode import DEFAULT_MAX_STEPS, IntegrationError, integrate_rk45


def _lotka_volterra_rhs(a, b, c, d):
    def rhs(t, y):
        n, p = y
        return np.array([a * n - b * n * p, c * n * p - d * p])

    return rhs


def solve_lotka_volterra_python(params, times, t_end, rel_tol, abs_tol, max_steps=DEFAULT_MAX_STEPS):
    params = np.asarray(params, dtype=float)
    _, out = integrate_rk45(_lotka_volterra_rhs(*params[2:]), params[:2], (0.0, t_end), rel_tol, abs_tol,
                            t_eval=times, max_steps=max_steps)
    return out


try:
    from ._lv_kernel import lotka_volterra_solve as _compiled_solve
except ImportError:  # extension not built
    _compiled_solve = None

HAVE_COMPILED = _compiled_solve is not None


def solve_lotka_volterra_compiled(params, times, t_end, rel_tol, abs_tol, max_steps=DEFAULT_MAX_STEPS):
    if _compiled_solve is None:
        raise ImportError("compiled kernel is not available")
    params = np.ascontiguousarray(params, dtype=float)
    times = np.ascontiguousarray(times, dtype=float)
    if times.size and (times[0] < 0 or times[-1] > t_end or np.any(np.diff(times) < 0)):
        raise ValueError("observation times must be sorted and inside [0, t_end]")
    if not np.all(np.isfinite(params[:2])):
        raise ValueError("initial state must be finite")
    out = np.empty((times.size, 2))
    status, last = _compiled_solve(params, times, float(t_end), float(rel_tol), float(abs_tol),
                                   int(max_steps), out)
    if status == 1:
        raise IntegrationError("step size underflow", last)
    if status == 2:
        raise IntegrationError(f"exceeded {max_steps} steps", last)
    return out


_forced_python = os.environ.get("MLDA_PURE_PYTHON", "") not in ("", "0")

if HAVE_COMPILED and not _forced_python:
    BACKEND = "compiled"
    solve_lotka_volterra = solve_lotka_volterra_compiled
else:
    BACKEND = "python"
    solve_lotka_volterra = solve_lotka_volterra_python
