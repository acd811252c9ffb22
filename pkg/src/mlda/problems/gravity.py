"""Gravity surveying: surface signal of a buried mass density sheet."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..random_field import (
    CovarianceKernel,
    KLExpansion,
    TensorGrid,
    field_expansion,
    midpoint_weights,
    project_to_grid,
    realize_field,
)
from .base import Problem


def assemble_gravity_matrix(m: int, n: int, depth: float) -> np.ndarray:
    """Midpoint-quadrature matrix mapping ``m x m`` subsurface masses to ``n x n`` surface readings."""
    surface = TensorGrid.midpoints(n).points
    sub = TensorGrid.midpoints(m).points
    s3 = np.column_stack([surface, np.zeros(len(surface))])
    t3 = np.column_stack([sub, np.full(len(sub), -depth)])
    r = cdist(s3, t3)
    return depth / (m * m) / r ** 3


@dataclass
class GravityLevel:
    m: int
    matrix: np.ndarray
    kl: KLExpansion


class GravityProblem(Problem):
    """Two or more quadrature resolutions sharing one KL parametrisation.

    The KL expansion is computed on the finest quadrature grid and
    interpolated onto coarser ones; every level observes the same ``n x n``
    surface grid.
    """

    def __init__(self, resolutions, n: int, depth=0.1, n_modes=32, length_scale=0.2, variance=1.0,
                 noise_sd=0.1):
        self.resolutions = tuple(int(m) for m in resolutions)
        self.n = int(n)
        self.depth = float(depth)
        self.noise_sd = float(noise_sd)
        self.kernel = CovarianceKernel("matern32", variance, length_scale)
        fine_m = self.resolutions[-1]
        fine_kl = field_expansion(self.kernel, TensorGrid.midpoints(fine_m), midpoint_weights(fine_m), n_modes)
        self.levels = [
            GravityLevel(m, assemble_gravity_matrix(m, self.n, self.depth),
                         project_to_grid(fine_kl, TensorGrid.midpoints(m)))
            for m in self.resolutions
        ]
        self.n_levels = len(self.levels)
        self.dims = (int(n_modes),) * self.n_levels

    def field(self, theta, level: int) -> np.ndarray:
        return realize_field(self.levels[level].kl, theta)

    def forward(self, theta, level):
        return self.levels[level].matrix @ self.field(theta, level)

    def linear_operator(self, level: int) -> np.ndarray:
        lev = self.levels[level]
        return lev.matrix @ lev.kl.modes

    def map_point(self, data, level: int = -1) -> np.ndarray:
        """Posterior mode, which is closed-form because the map is linear."""
        G = self.linear_operator(level)
        precision = np.eye(G.shape[1]) + G.T @ G / self.noise_sd ** 2
        return np.linalg.solve(precision, G.T @ data / self.noise_sd ** 2)


def gravity_forward(problem: GravityProblem, theta, level: int = -1) -> np.ndarray:
    return problem.forward(np.asarray(theta, dtype=float), level if level >= 0 else problem.n_levels - 1)
