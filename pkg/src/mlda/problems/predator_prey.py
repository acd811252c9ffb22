"""Lotka-Volterra parameter inference with time-window coarsening.

Coarse levels integrate over a shorter window and see only the observations
inside it.  Model output interleaves the two species per observation time,
``[N(t_0), P(t_0), N(t_1), P(t_1), ...]``, so a coarse level's output and
data are prefixes of the finest level's.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .. import kernels
from .base import Problem

TRUE_PARAMETERS = np.array([10.0, 5.0, 3.0, 0.7, 0.2, 1.0])
PARAMETER_NAMES = ("N0", "P0", "a", "b", "c", "d")


_NORMAL_PRIORS = ((10.8, 1.0), (5.3, 1.0), (2.5, 0.5), (1.2, 0.3))
_IG_SHAPE, _IG_SCALE = 1.0, 0.5
_LOG_NORMAL_CONST = -sum(math.log(sd) + 0.5 * math.log(2 * math.pi) for _, sd in _NORMAL_PRIORS)
_INVGAMMA_CONST = _IG_SHAPE * math.log(_IG_SCALE) - math.lgamma(_IG_SHAPE)


def _default_priors():
    # normal priors are (mean, standard deviation); inverse gamma is (shape, scale)
    return [
        stats.norm(10.8, 1.0),
        stats.norm(5.3, 1.0),
        stats.norm(2.5, 0.5),
        stats.invgamma(1.0, scale=0.5),
        stats.invgamma(1.0, scale=0.5),
        stats.norm(1.2, 0.3),
    ]


class PredatorPreyProblem(Problem):
    def __init__(self, windows=(4.0, 8.0, 12.0), obs_spacing=0.5, noise_sd=1.0, rel_tol=1e-6, abs_tol=1e-8,
                 qoi="full", max_steps=20_000):
        self.windows = tuple(float(w) for w in windows)
        if any(b <= a for a, b in zip(self.windows, self.windows[1:])):
            raise ValueError("time windows must be strictly increasing")
        t_end = self.windows[-1]
        self.times = np.round(np.arange(0.0, t_end + 1e-9, obs_spacing), 12)
        self.n_times = [int(np.sum(self.times <= w + 1e-12)) for w in self.windows]
        self.noise_sd = float(noise_sd)
        self.rel_tol = float(rel_tol)
        self.abs_tol = float(abs_tol)
        self.max_steps = int(max_steps)
        if qoi not in ("full", "window"):
            raise ValueError("qoi must be 'full' or 'window'")
        self.qoi_mode = qoi
        self.priors = _default_priors()
        self.n_levels = len(self.windows)
        self.dims = (6,) * self.n_levels

    def trajectory(self, theta, level: int) -> np.ndarray:
        """``(n_times, 2)`` array of (N, P) at the observation times of ``level``."""
        n = self.n_times[level]
        return kernels.solve_lotka_volterra(theta, self.times[:n], self.windows[level], self.rel_tol,
                                            self.abs_tol, self.max_steps)

    def forward(self, theta, level):
        return self.trajectory(np.asarray(theta, dtype=float), level).ravel()

    def observed(self, data, level):
        return data[: 2 * self.n_times[level]]

    def log_prior(self, theta) -> float:
        n0, p0, a, b, c, d = (float(x) for x in theta)
        if b <= 0.0 or c <= 0.0:
            return -np.inf
        # closed forms; scipy's logpdf is too slow for a per-proposal call
        total = _LOG_NORMAL_CONST
        for x, (mu, sd) in zip((n0, p0, a, d), _NORMAL_PRIORS):
            z = (x - mu) / sd
            total -= 0.5 * z * z
        for x in (b, c):
            total += _INVGAMMA_CONST - (_IG_SHAPE + 1.0) * math.log(x) - _IG_SCALE / x
        return total

    def sample_prior(self, rng):
        return np.array([dist.ppf(rng.random()) for dist in self.priors])

    def mean_predator(self, theta, output=None, level: int = -1) -> float:
        """Mean predicted predator density over the observation times."""
        full = self.n_levels - 1
        if self.qoi_mode == "window" and output is not None:
            return float(np.mean(output[1::2]))
        if output is not None and level == full:
            return float(np.mean(output[1::2]))
        return float(np.mean(self.trajectory(np.asarray(theta, dtype=float), full)[:, 1]))

    def qoi(self, level):
        return lambda theta, output: self.mean_predator(theta, output, level)
