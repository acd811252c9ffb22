"""Proposal kernels, subchain-length distributions and step tuning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import ContractViolation

TUNE_FACTOR = 1.1
TUNE_INTERVAL = 100
TARGET_WINDOW = (0.2, 0.5)


@dataclass(frozen=True)
class SubchainPmf:
    """Distribution of the subchain length: uniform on ``1..J`` or fixed at ``J``."""

    max_length: int
    mode: str = "uniform"

    def __post_init__(self):
        if self.max_length < 1:
            raise ContractViolation("subchain length must be positive")
        if self.mode not in ("uniform", "fixed"):
            raise ContractViolation(f"unknown subchain pmf mode {self.mode!r}")

    def pmf(self) -> np.ndarray:
        """Probabilities of lengths ``1..J`` as an array of length ``J``."""
        p = np.zeros(self.max_length)
        if self.mode == "fixed":
            p[-1] = 1.0
        else:
            p[:] = 1.0 / self.max_length
        return p


def draw_subchain_length(pmf: SubchainPmf, rng: np.random.Generator) -> int:
    # the fixed mode consumes no randomness, so DA and RST(fixed 1) stay in lockstep
    if pmf.mode == "fixed":
        return pmf.max_length
    return int(rng.integers(1, pmf.max_length + 1))


def tune_step(current_scale, observed_acceptance_rate, target_window=TARGET_WINDOW,
              factor=TUNE_FACTOR):
    lo, hi = target_window
    if observed_acceptance_rate > hi:
        return current_scale * factor
    if observed_acceptance_rate < lo:
        return current_scale / factor
    return current_scale


class Proposal:
    """Base class for coarsest-level proposals.

    Subclasses implement :meth:`propose`.  Asymmetric kernels set
    ``symmetric = False`` and implement :meth:`log_q_ratio`.
    """

    symmetric = True

    def __init__(self):
        self.tuning = False
        self._window_accepts = 0
        self._window_count = 0

    def propose(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_q_ratio(self, current: np.ndarray, proposed: np.ndarray) -> float:
        """``log q(current | proposed) - log q(proposed | current)``."""
        return 0.0

    def observe(self, state: np.ndarray, accepted: bool) -> None:
        """Feed back the outcome of an MH step; drives burn-in tuning."""
        if not self.tuning:
            return
        self._window_accepts += bool(accepted)
        self._window_count += 1
        if self._window_count >= TUNE_INTERVAL:
            self.adapt(self._window_accepts / self._window_count)
            self._window_accepts = 0
            self._window_count = 0

    def adapt(self, acceptance_rate: float) -> None:
        pass

    def start_tuning(self):
        self.tuning = True

    def stop_tuning(self):
        self.tuning = False
        self._window_accepts = 0
        self._window_count = 0


class RandomWalkProposal(Proposal):
    """Gaussian random walk ``psi = theta + scale * xi``."""

    def __init__(self, scale):
        super().__init__()
        self.scale = np.array(scale, dtype=float)
        if np.any(self.scale < 0):
            raise ContractViolation("random-walk scale must be non-negative")

    def propose(self, x, rng):
        return x + self.scale * rng.standard_normal(x.shape)

    def adapt(self, acceptance_rate):
        self.scale = tune_step(self.scale, acceptance_rate)


def rw_propose(theta, scale, rng):
    theta = np.asarray(theta, dtype=float)
    return theta + np.asarray(scale, dtype=float) * rng.standard_normal(theta.shape)


def rw_log_density(psi, theta, scale) -> float:
    """Log density of the Gaussian random-walk proposal ``q(psi | theta)``."""
    z = (np.asarray(psi) - np.asarray(theta)) / scale
    scale = np.broadcast_to(scale, z.shape)
    return float(-0.5 * z @ z - np.sum(np.log(scale)) - 0.5 * z.size * np.log(2 * np.pi))


def default_demcz_gamma(dim: int) -> float:
    return 2.38 / np.sqrt(2.0 * dim)


class DemczProposal(Proposal):
    """Differential-evolution proposal with a growing archive of past states.

    ``psi = theta + gamma * (z1 - z2) + eps``, with ``z1 != z2`` drawn without
    replacement from the archive and ``eps ~ N(0, jitter_scale^2 I)``.  During
    tuning the jump factor is scaled and every ``thin``-th accepted state is
    appended to the archive; both freeze when tuning stops.
    """

    def __init__(self, history, gamma: Optional[float] = None, jitter_scale=1e-6, thin=10):
        super().__init__()
        history = np.atleast_2d(np.asarray(history, dtype=float))
        self._history = [row.copy() for row in history]
        self.dim = history.shape[1]
        self.gamma = default_demcz_gamma(self.dim) if gamma is None else float(gamma)
        self.jitter_scale = np.array(jitter_scale, dtype=float)
        self.thin = int(thin)
        self._n_accepted = 0

    @property
    def history(self) -> np.ndarray:
        return np.array(self._history)

    def propose(self, x, rng):
        n = len(self._history)
        if n < 2:
            raise ContractViolation("DE-MC_Z archive needs at least two states; warm it with prior draws")
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        jump = self.gamma * (self._history[i] - self._history[j])
        return x + jump + self.jitter_scale * rng.standard_normal(x.shape)

    def observe(self, state, accepted):
        if self.tuning and accepted:
            self._n_accepted += 1
            if self._n_accepted % self.thin == 0:
                self._history.append(np.array(state, dtype=float))
        super().observe(state, accepted)

    def adapt(self, acceptance_rate):
        self.gamma = tune_step(self.gamma, acceptance_rate)


def demcz_propose(theta, state: DemczProposal, rng):
    return state.propose(np.asarray(theta, dtype=float), rng)


class FineModeProposal:
    """Kernel over the fine modes of a state; never sees the coarse modes."""

    symmetric = True

    def propose(self, fine: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_q_ratio(self, current: np.ndarray, proposed: np.ndarray) -> float:
        return 0.0


class IdentityFineProposal(FineModeProposal):
    """Keeps the fine modes frozen; consumes no randomness."""

    def propose(self, fine, rng):
        return fine.copy()


class RandomWalkFineProposal(FineModeProposal):
    def __init__(self, scale):
        self.scale = np.array(scale, dtype=float)

    def propose(self, fine, rng):
        if fine.size == 0:
            return fine.copy()
        return fine + self.scale * rng.standard_normal(fine.shape)


class PriorFineProposal(FineModeProposal):
    """Independence sampler drawing the fine modes from their prior marginal.

    ``sample(rng, n)`` draws ``n`` fine-mode values and ``log_density`` is the
    marginal prior log-density; the acceptance ratio needs it because an
    independence kernel is not symmetric.
    """

    symmetric = False

    def __init__(self, sample: Callable, log_density: Callable):
        self.sample = sample
        self.log_density = log_density

    @classmethod
    def standard_normal(cls):
        return cls(
            lambda rng, n: rng.standard_normal(n),
            lambda x: float(-0.5 * np.dot(x, x)),
        )

    def propose(self, fine, rng):
        if fine.size == 0:
            return fine.copy()
        return np.asarray(self.sample(rng, fine.size), dtype=float)

    def log_q_ratio(self, current, proposed):
        if current.size == 0:
            return 0.0
        return self.log_density(current) - self.log_density(proposed)
