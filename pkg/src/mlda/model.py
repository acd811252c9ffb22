"""Level-indexed posterior densities over embedded parameter spaces.

A hierarchy is a list of :class:`PosteriorLevel` objects, coarsest first,
together with a :class:`LevelPartition` describing how the state of level
``l - 1`` sits inside the state of level ``l``.  The coarse modes of a state
are always a prefix of its value vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


class EvaluationError(RuntimeError):
    """A forward model produced unusable output for a given state."""

    def __init__(self, message: str, state: Optional[np.ndarray] = None):
        super().__init__(message)
        self.state = None if state is None else np.array(state, copy=True)


@dataclass(frozen=True)
class LevelPartition:
    dims_per_level: tuple

    def __init__(self, dims_per_level: Sequence[int]):
        dims = tuple(int(d) for d in dims_per_level)
        if not dims:
            raise ContractViolation("partition needs at least one level")
        if any(d < 1 for d in dims):
            raise ContractViolation(f"level dimensions must be positive, got {dims}")
        if any(b < a for a, b in zip(dims, dims[1:])):
            raise ContractViolation(f"level dimensions must be non-decreasing, got {dims}")
        object.__setattr__(self, "dims_per_level", dims)

    @property
    def n_levels(self) -> int:
        return len(self.dims_per_level)

    def dim(self, level: int) -> int:
        return self.dims_per_level[level]

    def n_coarse(self, level: int) -> int:
        """Number of coarse modes of a level-``level`` state."""
        if level < 1:
            raise ContractViolation("level 0 has no coarse modes")
        return self.dims_per_level[level - 1]


@dataclass(frozen=True)
class LevelState:
    level: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __eq__(self, other):
        if not isinstance(other, LevelState):
            return NotImplemented
        return self.level == other.level and np.array_equal(self.values, other.values)


def split_state(theta: LevelState, partition: LevelPartition):
    """Split a state into ``(fine_modes, coarse_state)``.

    >>> p = LevelPartition([2, 4])
    >>> fine, coarse = split_state(LevelState(1, [1., 2., 3., 4.]), p)
    >>> fine.tolist(), coarse.values.tolist()
    ([3.0, 4.0], [1.0, 2.0])
    """
    if theta.level < 1:
        raise ContractViolation("cannot split a level-0 state")
    if theta.values.shape != (partition.dim(theta.level),):
        raise ContractViolation(
            f"state of length {theta.values.size} does not match level {theta.level} "
            f"dimension {partition.dim(theta.level)}"
        )
    nc = partition.n_coarse(theta.level)
    return theta.values[nc:].copy(), LevelState(theta.level - 1, theta.values[:nc].copy())


def join_state(fine_modes: np.ndarray, coarse: LevelState) -> LevelState:
    values = np.concatenate([coarse.values, np.asarray(fine_modes, dtype=float)])
    return LevelState(coarse.level + 1, values)


def _flat_prior(values):
    return 0.0


@dataclass(eq=False)
class PosteriorLevel:
    """Unnormalised Gaussian-noise posterior for one level.

    ``forward_map`` maps a state vector to model output; ``log_prior`` maps it
    to a log-density (``-inf`` outside the support).  ``qoi`` optionally maps
    ``(values, forward_output)`` to a scalar quantity of interest.

    A level with an empty ``data`` vector carries no likelihood, which is how
    arbitrary target densities (e.g. on finite state spaces) are expressed:
    put the whole log-density in ``log_prior``.
    """

    forward_map: Optional[Callable[[np.ndarray], np.ndarray]]
    data: np.ndarray
    noise_covariance: np.ndarray
    log_prior: Callable[[np.ndarray], float] = _flat_prior
    dim: Optional[int] = None
    qoi: Optional[Callable[[np.ndarray, Optional[np.ndarray]], float]] = None
    _whitener: Optional[np.ndarray] = field(init=False, repr=False)
    _inv_sd: Optional[np.ndarray] = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.data = np.atleast_1d(np.asarray(self.data, dtype=float))
        cov = np.asarray(self.noise_covariance, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(self.data.size)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (self.data.size, self.data.size):
            raise ContractViolation(
                f"noise covariance shape {cov.shape} does not match data length {self.data.size}"
            )
        self.noise_covariance = cov
        diag = np.diag(cov)
        if self.data.size and np.all(diag > 0) and np.count_nonzero(cov - np.diag(diag)) == 0:
            # diagonal noise: whitening is an elementwise scaling
            self._inv_sd = 1.0 / np.sqrt(diag)
        if self._inv_sd is not None:
            self._whitener = None
        elif self.data.size:
            chol = linalg.cholesky(cov, lower=True)
            # inverse Cholesky factor: ||W r||^2 = r^T cov^-1 r
            self._whitener = linalg.solve_triangular(chol, np.eye(self.data.size), lower=True)
        else:
            self._whitener = np.zeros((0, 0))

    @property
    def has_likelihood(self) -> bool:
        return self.data.size > 0

    def forward(self, values: np.ndarray) -> Optional[np.ndarray]:
        if not self.has_likelihood:
            return None
        out = np.asarray(self.forward_map(values), dtype=float)
        if out.shape != self.data.shape:
            raise ContractViolation(
                f"forward output shape {out.shape} does not match data shape {self.data.shape}"
            )
        if not np.all(np.isfinite(out)):
            raise EvaluationError("forward model returned non-finite output", values)
        return out

    def log_likelihood_from_output(self, output: Optional[np.ndarray]) -> float:
        if output is None:
            return 0.0
        if self._inv_sd is not None:
            r = (output - self.data) * self._inv_sd
        else:
            r = self._whitener @ (output - self.data)
        return -0.5 * float(r @ r)

    def _check(self, values):
        values = np.asarray(values, dtype=float)
        if self.dim is not None and values.shape != (self.dim,):
            raise ContractViolation(
                f"state of shape {values.shape} does not match level dimension {self.dim}"
            )
        return values

    def log_likelihood(self, values) -> float:
        values = self._check(_values(values))
        return self.log_likelihood_from_output(self.forward(values))

    def log_posterior(self, values) -> float:
        values = self._check(_values(values))
        lp = float(self.log_prior(values))
        if lp == -np.inf:
            return lp
        return self.log_likelihood_from_output(self.forward(values)) + lp

    __call__ = log_posterior


def _values(theta):
    return theta.values if isinstance(theta, LevelState) else theta


def log_likelihood(level: PosteriorLevel, theta) -> float:
    return level.log_likelihood(theta)


def log_posterior(level: PosteriorLevel, theta) -> float:
    return level.log_posterior(theta)


class ModelHierarchy:
    """Ordered posterior levels ``0..L`` sharing a nested parameter embedding."""

    def __init__(self, levels: Sequence[PosteriorLevel], partition: LevelPartition | Sequence[int]):
        if not isinstance(partition, LevelPartition):
            partition = LevelPartition(partition)
        if len(levels) != partition.n_levels:
            raise ContractViolation(
                f"{len(levels)} levels given but partition describes {partition.n_levels}"
            )
        for ell, lev in enumerate(levels):
            if lev.dim is None:
                lev.dim = partition.dim(ell)
            elif lev.dim != partition.dim(ell):
                raise ContractViolation(
                    f"level {ell} has dimension {lev.dim}, partition says {partition.dim(ell)}"
                )
        self.levels = tuple(levels)
        self.partition = partition

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, ell) -> PosteriorLevel:
        return self.levels[ell]
