"""Shared plumbing for benchmark problems: priors, hierarchies and synthetic data."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..model import ModelHierarchy, PosteriorLevel
from ..rng import stream


def standard_normal_log_prior(theta) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(-0.5 * theta @ theta)


class Problem:
    """Interface every benchmark problem implements.

    Subclasses provide ``n_levels``, ``dims``, ``noise_sd``, :meth:`forward`,
    :meth:`log_prior` and :meth:`sample_prior`; :meth:`qoi` is optional.
    """

    n_levels: int
    dims: tuple
    noise_sd: float

    def forward(self, theta, level: int) -> np.ndarray:
        raise NotImplementedError

    def log_prior(self, theta) -> float:
        return standard_normal_log_prior(theta)

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.dims[-1])

    def qoi(self, level: int):
        return None

    def observed(self, data: np.ndarray, level: int) -> np.ndarray:
        """Portion of the finest-level data vector seen at ``level``."""
        return data

    def hierarchy(self, data, levels: Optional[list] = None) -> ModelHierarchy:
        """Posterior hierarchy for ``data``; ``levels`` selects a subset, coarsest first."""
        levels = list(range(self.n_levels)) if levels is None else list(levels)
        posts = []
        for ell in levels:
            obs = self.observed(np.asarray(data, dtype=float), ell)
            posts.append(PosteriorLevel(
                forward_map=lambda th, ell=ell: self.forward(th, ell),
                data=obs,
                noise_covariance=self.noise_sd ** 2,
                log_prior=self.log_prior,
                qoi=self.qoi(ell),
            ))
        return ModelHierarchy(posts, [self.dims[ell] for ell in levels])


def generate_synthetic_data(problem: Problem, theta_true, noise_seed: int, noise_scale=None) -> np.ndarray:
    """Finest-level output at ``theta_true`` plus seeded Gaussian noise."""
    clean = problem.forward(np.asarray(theta_true, dtype=float), problem.n_levels - 1)
    sd = problem.noise_sd if noise_scale is None else noise_scale
    if sd == 0:
        return clean.copy()
    return clean + sd * stream(noise_seed, 0xDA7A).standard_normal(clean.shape)


class LinearGaussianProblem(Problem):
    """``d = G_l theta + noise`` with a standard normal prior.

    Coarse levels perturb the finest operator, so every level has a closed-form
    Gaussian posterior.
    """

    def __init__(self, operators, noise_sd: float):
        self.operators = [np.asarray(G, dtype=float) for G in operators]
        self.n_levels = len(self.operators)
        self.dims = tuple(G.shape[1] for G in self.operators)
        self.noise_sd = float(noise_sd)

    def forward(self, theta, level):
        return self.operators[level] @ theta

    def posterior_moments(self, data, level: Optional[int] = None):
        G = self.operators[-1 if level is None else level]
        precision = np.eye(G.shape[1]) + G.T @ G / self.noise_sd ** 2
        cov = np.linalg.inv(precision)
        return cov @ G.T @ np.asarray(data) / self.noise_sd ** 2, cov
