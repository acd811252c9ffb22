"""Gaussian adaptive error model for coarse-level forward-map bias.

Each adjacent pair ``(k, k + 1)`` carries a running Gaussian model of
``B_k = F_{k+1} - F_k``.  The bias of level ``l`` relative to the finest level
is the sum of the pair biases ``k = l .. L-1``, and its Gaussian model has the
summed means and covariances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model import ContractViolation, EvaluationError, ModelHierarchy


@dataclass
class BiasPairModel:
    k: int
    mean: np.ndarray
    cov: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, k: int, dim: int) -> "BiasPairModel":
        return cls(k, np.zeros(dim), np.zeros((dim, dim)), 0)

    @property
    def dim(self) -> int:
        return self.mean.size


def update_moments(model: BiasPairModel, b) -> BiasPairModel:
    """Absorb one bias sample using the recursive mean/covariance formulae.

    The first sample sets the mean to ``b`` and the covariance to zero; from
    then on the recursion reproduces the batch mean and the unbiased
    ``1/(n-1)`` sample covariance.  Updates ``model`` in place and returns it.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != model.mean.shape:
        raise ContractViolation(f"bias sample shape {b.shape} != model dimension {model.mean.shape}")
    i = model.count
    if i == 0:
        model.mean = b.copy()
        model.cov = np.zeros((b.size, b.size))
        model.count = 1
        return model
    mu_old = model.mean
    mu_new = (i * mu_old + b) / (i + 1)
    model.cov = (i - 1) / i * model.cov + (
        i * np.outer(mu_old, mu_old) - (i + 1) * np.outer(mu_new, mu_new) + np.outer(b, b)
    ) / i
    model.mean = mu_new
    model.count = i + 1
    return model


def _embed(hierarchy: ModelHierarchy, k: int, theta, fine_prior_mean=None):
    """Return (state at level k + 1, state at level k) for a parameter vector."""
    theta = np.asarray(theta, dtype=float)
    d_fine = hierarchy.partition.dim(k + 1)
    d_coarse = hierarchy.partition.dim(k)
    if theta.size >= d_fine:
        fine_state = theta[:d_fine]
    else:
        if fine_prior_mean is None:
            fill = np.zeros(d_fine - theta.size)
        else:
            fill = np.asarray(fine_prior_mean, dtype=float)[: d_fine - theta.size]
        fine_state = np.concatenate([theta, fill])
    return fine_state, fine_state[:d_coarse]


def bias_sample(hierarchy: ModelHierarchy, k: int, theta, fine_prior_mean=None) -> np.ndarray:
    """``F_{k+1}(theta) - F_k(theta)`` on the shared observation space."""
    fine_state, coarse_state = _embed(hierarchy, k, theta, fine_prior_mean)
    out_f = hierarchy[k + 1].forward(fine_state)
    out_c = hierarchy[k].forward(coarse_state)
    if out_f is None or out_c is None or out_f.shape != out_c.shape:
        raise ContractViolation(
            f"levels {k} and {k + 1} do not share an observation space; adaptive error model unavailable"
        )
    return out_f - out_c


def offline_moments(hierarchy: ModelHierarchy, k: int, prior_sampler, n: int, rng) -> BiasPairModel:
    """Sample mean and covariance of ``B_k`` over ``n`` prior draws.

    ``prior_sampler(rng)`` returns a parameter vector at level ``k + 1``.
    """
    if n < 2:
        raise ContractViolation("offline moments need at least two prior draws")
    samples = np.array([bias_sample(hierarchy, k, prior_sampler(rng)) for _ in range(n)])
    mean = samples.mean(axis=0)
    centred = samples - mean
    cov = centred.T @ centred / (n - 1)
    return BiasPairModel(k, mean, cov, n)


@dataclass
class BiasModel:
    """Pair models ``k = 0 .. L-1`` and the bias-corrected likelihoods they induce.

    With ``with_covariance=False`` only the bias means are tracked and the
    corrected likelihood shifts the coarse output by the mean while keeping the
    level's own noise model.  That keeps a coarse evaluation as cheap as an
    uncorrected one when the observation space is large.
    """

    pairs: list
    noise_covariance: list = field(default_factory=list)
    data: list = field(default_factory=list)
    adapting: bool = False
    with_covariance: bool = True
    output_likelihoods: list = field(default_factory=list, repr=False)
    version: int = 0
    _factor_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def for_hierarchy(cls, hierarchy: ModelHierarchy, with_covariance: bool = True) -> "BiasModel":
        dims = {lev.data.size for lev in hierarchy.levels}
        if len(dims) != 1 or 0 in dims:
            raise ContractViolation(
                "adaptive error model needs every level to observe the same data space"
            )
        (m,) = dims
        pairs = [BiasPairModel.empty(k, m) for k in range(hierarchy.L)]
        return cls(
            pairs,
            [lev.noise_covariance for lev in hierarchy.levels],
            [lev.data for lev in hierarchy.levels],
            with_covariance=with_covariance,
            output_likelihoods=[lev.log_likelihood_from_output for lev in hierarchy.levels],
        )

    @property
    def L(self) -> int:
        return len(self.pairs)

    def total_mean(self, level: int) -> np.ndarray:
        return sum((p.mean for p in self.pairs[level:]), np.zeros(self.pairs[0].dim))

    def total_cov(self, level: int) -> np.ndarray:
        m = self.pairs[0].dim
        return sum((p.cov for p in self.pairs[level:]), np.zeros((m, m)))

    def update(self, k: int, b) -> None:
        if self.with_covariance:
            update_moments(self.pairs[k], b)
        else:
            pair = self.pairs[k]
            pair.mean = pair.mean + (np.asarray(b, dtype=float) - pair.mean) / (pair.count + 1)
            pair.count += 1
        self.version += 1

    def set_pair(self, model: BiasPairModel) -> None:
        self.pairs[model.k] = model
        self.version += 1

    def _factor(self, level: int):
        key = (level, self.version)
        hit = self._factor_cache.get(key)
        if hit is None:
            self._factor_cache = {k: v for k, v in self._factor_cache.items() if k[1] == self.version}
            combined = self.total_cov(level) + self.noise_covariance[level]
            try:
                chol = linalg.cholesky(combined, lower=True)
            except linalg.LinAlgError as exc:
                raise EvaluationError(f"bias-corrected covariance at level {level} is not positive definite") from exc
            whitener = linalg.solve_triangular(chol, np.eye(combined.shape[0]), lower=True)
            hit = (self.total_mean(level), whitener)
            self._factor_cache[key] = hit
        return hit

    def corrected_log_likelihood(self, level: int, output: np.ndarray) -> float:
        if level >= self.L:
            raise ContractViolation(f"no bias pairs above level {level}")
        if not self.with_covariance:
            return self.output_likelihoods[level](output + self.total_mean(level))
        mean, whitener = self._factor(level)
        r = whitener @ (output + mean - self.data[level])
        return -0.5 * float(r @ r)


def corrected_log_likelihood(hierarchy: ModelHierarchy, level: int, theta, bias: BiasModel) -> float:
    """Bias-corrected Gaussian log-likelihood of ``theta`` at ``level``."""
    output = hierarchy[level].forward(np.asarray(theta, dtype=float))
    if level == hierarchy.L:
        return hierarchy[level].log_likelihood_from_output(output)
    return bias.corrected_log_likelihood(level, output)
