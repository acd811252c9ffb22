"""Dormand-Prince 5(4) integrator with proportional step control and dense output."""

from __future__ import annotations

import numpy as np

from ..model import EvaluationError

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th-order weights and the embedded 4th-order weights
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension: y(t + x h) = y + h * K^T P [x, x^2, x^3, x^4]
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERROR_EXPONENT = -1 / 5
DEFAULT_MAX_STEPS = 50_000


class IntegrationError(EvaluationError):
    """The step size collapsed or the step budget ran out."""

    def __init__(self, message, last_time):
        super().__init__(f"{message} (last valid time {last_time:.6g})")
        self.last_time = last_time


def _rms(x):
    return float(np.sqrt(np.mean(x * x)))


def initial_step(rhs, t0, y0, f0, t_end, rel_tol, abs_tol):
    """Starting step from the usual two-derivative heuristic."""
    scale = abs_tol + np.abs(y0) * rel_tol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, t_end - t0)


def integrate_rk45(rhs, y0, t_span, rel_tol=1e-6, abs_tol=1e-8, t_eval=None,
                   max_steps=DEFAULT_MAX_STEPS):
    """Solve ``y' = rhs(t, y)`` on ``t_span = (t0, t1)`` with ``t1 > t0``.

    Returns ``(times, values)`` where ``values[i]`` is the solution at
    ``times[i]``.  ``t_eval`` defaults to ``[t0, t1]``; values strictly inside
    a step come from the continuous extension.
    """
    t0, t1 = (float(t) for t in t_span)
    if not t1 > t0:
        raise ValueError("t_span must be increasing and non-degenerate")
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state must be finite")
    times = np.array([t0, t1] if t_eval is None else t_eval, dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < t0 or times[-1] > t1):
        raise ValueError("t_eval must be sorted and inside t_span")

    out = np.empty((times.size, y.size))
    k = 0
    while k < times.size and times[k] == t0:
        out[k] = y
        k += 1

    t = t0
    f = np.asarray(rhs(t, y), dtype=float)
    h = initial_step(rhs, t, y, f, t1, rel_tol, abs_tol)
    K = np.empty((7, y.size))
    steps = 0
    while t < t1:
        min_step = 10 * (np.nextafter(t, np.inf) - t)
        if h > t1 - t:
            h = t1 - t
        rejected = False
        while True:
            if h < min_step:
                raise IntegrationError("step size underflow", t)
            K[0] = f
            for s in range(1, 6):
                K[s] = rhs(t + C[s] * h, y + h * (A[s] @ K[:s]))
            y_new = y + h * (B @ K[:6])
            t_new = t1 if t + h >= t1 else t + h
            f_new = np.asarray(rhs(t_new, y_new), dtype=float)
            K[6] = f_new
            scale = abs_tol + np.maximum(np.abs(y), np.abs(y_new)) * rel_tol
            err = _rms(h * (E @ K) / scale)
            if np.isfinite(err) and err < 1.0:
                factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** ERROR_EXPONENT)
                if rejected:
                    factor = min(1.0, factor)
                break
            rejected = True
            h *= MIN_FACTOR if not np.isfinite(err) else max(MIN_FACTOR, SAFETY * err ** ERROR_EXPONENT)
        steps += 1
        if steps > max_steps:
            raise IntegrationError(f"exceeded {max_steps} steps", t)
        if k < times.size and times[k] <= t_new:
            Q = K.T @ P
            while k < times.size and times[k] <= t_new:
                x = (times[k] - t) / h
                out[k] = y + h * (Q @ np.array([x, x * x, x ** 3, x ** 4]))
                k += 1
        t, y, f = t_new, y_new, f_new
        h *= factor
    return times, out
