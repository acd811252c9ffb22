"""Steady Darcy flow on the unit square with a log-normal permeability.

``-div(k grad p) = 0`` with ``p = 0`` on ``x1 = 0``, ``p = 1`` on ``x1 = 1``
and no flux through ``x2 = 0, 1``.  Piecewise-linear elements on a structured
mesh of right triangles; ``k`` is constant per triangle, taken at the
centroid.  Heads are read at observation points by bilinear interpolation of
the nodal values.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..model import EvaluationError
from ..random_field import (
    CovarianceKernel,
    KLExpansion,
    TensorGrid,
    bilinear_weights,
    evaluate_at,
    field_expansion,
    trapezoid_weights,
)
from .base import Problem


def mesh_sizes(m0: int, n_levels: int) -> list:
    """Points per direction on each level: ``4^l (m0 - 1) + 1``."""
    return [4 ** ell * (m0 - 1) + 1 for ell in range(n_levels)]


def observation_lattice(per_side: int = 5) -> np.ndarray:
    """Uniform interior lattice ``j / (per_side + 1)``, x fastest."""
    c = np.arange(1, per_side + 1) / (per_side + 1)
    return TensorGrid(c, c).points


def structured_triangles(m: int):
    """Nodes (x fastest) and triangles of the ``m x m`` mesh, each cell cut along its rising diagonal."""
    grid = TensorGrid.nodes(m)
    idx = np.arange(m * m).reshape(m, m)
    n00 = idx[:-1, :-1].ravel()
    n10 = idx[:-1, 1:].ravel()
    n01 = idx[1:, :-1].ravel()
    n11 = idx[1:, 1:].ravel()
    tris = np.concatenate([np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])])
    return grid, tris


def p1_stiffness(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Unit-coefficient local stiffness matrices, shape ``(n_tri, 3, 3)``."""
    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # gradients of the barycentric coordinates
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    area = 0.5 * np.abs(det)
    return area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)


class DarcyMesh:
    """Everything about one mesh level that does not depend on the permeability."""

    def __init__(self, m: int, kl: KLExpansion, obs_points: np.ndarray):
        self.m = m
        grid, tris = structured_triangles(m)
        self.grid = grid
        self.nodes = grid.points
        self.tris = tris
        self.local = p1_stiffness(self.nodes, tris)
        centroids = self.nodes[tris].mean(axis=1)
        self.log_k_modes = evaluate_at(kl, centroids) * np.sqrt(kl.eigenvalues)
        self.observe = bilinear_weights(grid, obs_points)

        x = self.nodes[:, 0]
        self.dirichlet_value = np.full(m * m, np.nan)
        self.dirichlet_value[np.isclose(x, 0.0)] = 0.0
        self.dirichlet_value[np.isclose(x, 1.0)] = 1.0
        fixed = ~np.isnan(self.dirichlet_value)
        self.free = np.flatnonzero(~fixed)
        self.fixed = np.flatnonzero(fixed)
        numbering = np.full(m * m, -1)
        numbering[self.free] = np.arange(self.free.size)

        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        self.rows, self.cols = rows, cols
        ff = (numbering[rows] >= 0) & (numbering[cols] >= 0)
        self._ff = ff
        self._ff_rows = numbering[rows[ff]]
        self._ff_cols = numbering[cols[ff]]
        # free rows coupled to nonzero prescribed heads feed the right-hand side
        fd = (numbering[rows] >= 0) & fixed[cols] & (np.nan_to_num(self.dirichlet_value)[cols] != 0)
        self._fd = fd
        self._fd_rows = numbering[rows[fd]]
        self._fd_vals = self.dirichlet_value[cols[fd]]

    def conductivity(self, theta) -> np.ndarray:
        return np.exp(self.log_k_modes @ theta)

    def solve(self, theta) -> np.ndarray:
        """Nodal heads for KL coefficients ``theta``."""
        k = self.conductivity(theta)
        entries = (k[:, None, None] * self.local).ravel()
        n_free = self.free.size
        A = sparse.csc_matrix((entries[self._ff], (self._ff_rows, self._ff_cols)), shape=(n_free, n_free))
        rhs = -np.bincount(self._fd_rows, weights=entries[self._fd] * self._fd_vals, minlength=n_free)
        p_free = spsolve(A, rhs)
        if not np.all(np.isfinite(p_free)):
            raise EvaluationError("Darcy system could not be solved", theta)
        p = self.dirichlet_value.copy()
        p[self.free] = p_free
        return p

    def stiffness(self, theta) -> sparse.csr_matrix:
        k = self.conductivity(theta)
        entries = (k[:, None, None] * self.local).ravel()
        return sparse.csr_matrix((entries, (self.rows, self.cols)), shape=(self.m ** 2,) * 2)


class DarcyProblem(Problem):
    """Nested meshes sharing one KL expansion of ``log k``.

    The expansion is computed on the finest mesh nodes with trapezoidal
    weights and interpolated to triangle centroids on every level.
    """

    def __init__(self, m0=5, n_levels=3, n_modes=64, length_scale=0.1, sigma=2.0, noise_sd=0.01,
                 obs_per_side=5, meshes=None):
        self.meshes_m = list(meshes) if meshes is not None else mesh_sizes(m0, n_levels)
        self.n_levels = len(self.meshes_m)
        self.noise_sd = float(noise_sd)
        self.kernel = CovarianceKernel("squared_exponential", sigma ** 2, length_scale)
        fine = self.meshes_m[-1]
        self.kl = field_expansion(self.kernel, TensorGrid.nodes(fine), trapezoid_weights(fine), n_modes)
        self.obs_points = observation_lattice(obs_per_side)
        self.levels = [DarcyMesh(m, self.kl, self.obs_points) for m in self.meshes_m]
        self.dims = (int(n_modes),) * self.n_levels

    def solve(self, theta, level: int) -> np.ndarray:
        return self.levels[level].solve(np.asarray(theta, dtype=float))

    def forward(self, theta, level):
        return self.levels[level].observe @ self.solve(theta, level)

    def boundary_fluxes(self, theta, level: int):
        """Net discrete flux through ``x1 = 0`` and ``x1 = 1`` (reaction sums)."""
        mesh = self.levels[level]
        p = mesh.solve(np.asarray(theta, dtype=float))
        reaction = mesh.stiffness(theta) @ p
        x = mesh.nodes[:, 0]
        return float(reaction[np.isclose(x, 0.0)].sum()), float(reaction[np.isclose(x, 1.0)].sum())


def darcy_solve(problem: DarcyProblem, theta, level: int) -> np.ndarray:
    return problem.forward(np.asarray(theta, dtype=float), level)
