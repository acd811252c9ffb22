"""Gaussian random fields through a truncated Karhunen-Loeve expansion.

Eigenpairs of the covariance operator are approximated with the Nystrom
method on a point set with quadrature weights ``w``: the symmetric matrix
``W^1/2 C W^1/2`` is diagonalised and its eigenvectors ``v`` map back to
eigenfunction values ``phi = W^-1/2 v``, which are orthonormal under ``w``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .model import ContractViolation

KERNELS = ("matern32", "squared_exponential")


@dataclass(frozen=True)
class CovarianceKernel:
    kind: str
    variance: float
    length_scale: float

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ContractViolation(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if not (self.variance > 0 and self.length_scale > 0):
            raise ContractViolation("kernel variance and length scale must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "matern32":
            s = np.sqrt(3.0) * r / self.length_scale
            return self.variance * (1.0 + s) * np.exp(-s)
        return self.variance * np.exp(-0.5 * (r / self.length_scale) ** 2)


def covariance_matrix(kernel: CovarianceKernel, points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return kernel(cdist(points, points))


@dataclass(frozen=True)
class TensorGrid:
    """Tensor-product grid; flattened point order runs fastest along x."""

    xs: np.ndarray
    ys: np.ndarray

    def __init__(self, xs, ys):
        object.__setattr__(self, "xs", np.asarray(xs, dtype=float))
        object.__setattr__(self, "ys", np.asarray(ys, dtype=float))

    @classmethod
    def midpoints(cls, m: int) -> "TensorGrid":
        """Cell midpoints of an ``m x m`` partition of the unit square."""
        c = (np.arange(m) + 0.5) / m
        return cls(c, c)

    @classmethod
    def nodes(cls, m: int) -> "TensorGrid":
        """``m x m`` equispaced nodes on the unit square, boundary included."""
        c = np.linspace(0.0, 1.0, m)
        return cls(c, c)

    @property
    def shape(self):
        return (self.ys.size, self.xs.size)

    @property
    def points(self) -> np.ndarray:
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def __eq__(self, other):
        return (isinstance(other, TensorGrid) and np.array_equal(self.xs, other.xs)
                and np.array_equal(self.ys, other.ys))

    def __hash__(self):
        return hash((self.xs.tobytes(), self.ys.tobytes()))


def midpoint_weights(m: int) -> np.ndarray:
    return np.full(m * m, 1.0 / (m * m))


def trapezoid_weights(m: int) -> np.ndarray:
    """Tensor trapezoidal weights for ``m x m`` nodes on the unit square."""
    w1 = np.full(m, 1.0 / (m - 1))
    w1[[0, -1]] *= 0.5
    return np.outer(w1, w1).ravel()


def bilinear_weights(grid: TensorGrid, points, tol: float = 1e-12) -> np.ndarray:
    """Dense matrix ``B`` with ``B @ f`` the bilinear interpolant of nodal ``f`` at ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    xs, ys = grid.xs, grid.ys
    if xs.size < 2 or ys.size < 2:
        raise ContractViolation("bilinear interpolation needs at least two nodes per direction")
    px, py = points[:, 0], points[:, 1]
    outside = (px < xs[0] - tol) | (px > xs[-1] + tol) | (py < ys[0] - tol) | (py > ys[-1] + tol)
    if np.any(outside):
        bad = points[np.argmax(outside)]
        raise ContractViolation(
            f"point {bad.tolist()} lies outside [{xs[0]}, {xs[-1]}] x [{ys[0]}, {ys[-1]}]"
        )
    i = np.clip(np.searchsorted(xs, px, side="right") - 1, 0, xs.size - 2)
    j = np.clip(np.searchsorted(ys, py, side="right") - 1, 0, ys.size - 2)
    tx = np.clip((px - xs[i]) / (xs[i + 1] - xs[i]), 0.0, 1.0)
    ty = np.clip((py - ys[j]) / (ys[j + 1] - ys[j]), 0.0, 1.0)
    nx = xs.size
    B = np.zeros((points.shape[0], xs.size * ys.size))
    rows = np.arange(points.shape[0])
    for di, dj, wgt in ((0, 0, (1 - tx) * (1 - ty)), (1, 0, tx * (1 - ty)),
                        (0, 1, (1 - tx) * ty), (1, 1, tx * ty)):
        np.add.at(B, (rows, (j + dj) * nx + i + di), wgt)
    return B


@dataclass(frozen=True)
class KLExpansion:
    """Leading eigenpairs of a covariance operator sampled on a point set.

    ``eigenfunctions[:, i]`` holds the values of the ``i``-th eigenfunction
    at ``points``; ``grid`` is set when the points form a tensor grid, which
    is what :func:`project_to_grid` interpolates from.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    points: np.ndarray
    weights: Optional[np.ndarray] = None
    grid: Optional[TensorGrid] = None

    @property
    def R(self) -> int:
        return self.eigenvalues.size

    @property
    def modes(self) -> np.ndarray:
        """Eigenfunctions scaled by the square roots of their eigenvalues."""
        return self.eigenfunctions * np.sqrt(self.eigenvalues)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def kl_decompose(C, weights, R: int, points=None, grid: Optional[TensorGrid] = None,
                 rtol: float = 1e-12) -> KLExpansion:
    """Top-``R`` eigenpairs of the covariance operator discretised by ``(C, weights)``."""
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    w = np.broadcast_to(np.asarray(weights, dtype=float), (n,)).copy()
    if C.shape != (n, n):
        raise ContractViolation("covariance matrix must be square")
    if np.any(w <= 0):
        raise ContractViolation("quadrature weights must be positive")
    if not 1 <= R <= n:
        raise ContractViolation(f"truncation order must lie in 1..{n}, got {R}")
    sw = np.sqrt(w)
    scaled = sw[:, None] * C * sw[None, :]
    scaled = 0.5 * (scaled + scaled.T)
    vals, vecs = linalg.eigh(scaled)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    tol = rtol * max(vals[0], 0.0) * n
    rank = int(np.sum(vals > tol))
    if R > rank:
        raise ContractViolation(f"requested {R} modes but only {rank} eigenvalues exceed {tol:.3g}")
    phi = _fix_signs(vecs[:, :R] / sw[:, None])
    if points is None and grid is not None:
        points = grid.points
    pts = None if points is None else np.asarray(points, dtype=float)
    return KLExpansion(vals[:R].copy(), phi, pts, w, grid)


def field_expansion(kernel: CovarianceKernel, grid: TensorGrid, weights, R: int) -> KLExpansion:
    return kl_decompose(covariance_matrix(kernel, grid.points), weights, R, grid=grid)


def realize_field(kl: KLExpansion, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (kl.R,):
        raise ContractViolation(f"need {kl.R} KL coefficients, got shape {theta.shape}")
    return kl.eigenfunctions @ (np.sqrt(kl.eigenvalues) * theta)


def evaluate_at(kl: KLExpansion, points) -> np.ndarray:
    """Eigenfunction values at arbitrary points by bilinear interpolation."""
    if kl.grid is None:
        raise ContractViolation("interpolation needs an expansion built on a tensor grid")
    return bilinear_weights(kl.grid, points) @ kl.eigenfunctions


def project_to_grid(kl: KLExpansion, target: TensorGrid) -> KLExpansion:
    """Same eigenvalues and coefficients, eigenfunctions interpolated onto ``target``."""
    if kl.grid is not None and kl.grid == target:
        return kl
    return KLExpansion(kl.eigenvalues.copy(), evaluate_at(kl, target.points), target.points, None, target)


def write_expansion(kl: KLExpansion, path) -> None:
    """Text export: one row per point, columns ``x y phi_1 .. phi_R``.

    The first header line lists the eigenvalues in descending order.
    """
    pts = kl.points if kl.points is not None else np.zeros((kl.eigenfunctions.shape[0], 0))
    header = "eigenvalues " + " ".join(f"{v:.17g}" for v in kl.eigenvalues)
    header += "\ncolumns " + " ".join([f"x{i}" for i in range(pts.shape[1])]
                                       + [f"phi_{i + 1}" for i in range(kl.R)])
    np.savetxt(path, np.column_stack([pts, kl.eigenfunctions]), fmt="%.17g", header=header)


def read_expansion(path, n_coords: int = 2) -> KLExpansion:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# eigenvalues"):
        raise ContractViolation(f"{path}: missing eigenvalue header")
    vals = np.array([float(t) for t in first.split()[2:]])
    data = np.loadtxt(path, ndmin=2)
    return KLExpansion(vals, data[:, n_coords:], data[:, :n_coords])
