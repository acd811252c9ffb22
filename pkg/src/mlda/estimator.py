"""Single-level and multilevel (telescoping) estimators of posterior expectations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ContractViolation


def _mean(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ContractViolation("cannot average an empty list")
    # fsum is exactly rounded, so it subsumes compensated summation
    return math.fsum(values.tolist()) / values.size


def standard_estimate(qoi_values) -> float:
    """Arithmetic mean of a chain's QoI values."""
    return _mean(qoi_values)


@dataclass
class MultilevelSamples:
    """QoI streams feeding the multilevel estimator.

    ``states[l]`` holds ``Q_l`` at every recorded state of level ``l``;
    ``proposals[l]`` (for ``l >= 1``) holds ``Q_{l-1}`` at the coarse
    proposal attributed to each level-``l`` iteration, so it has the same
    length as ``states[l]``.  ``proposals[0]`` is unused and may be ``None``.
    """

    states: list
    proposals: list
    subchain_lengths: tuple = ()

    def __post_init__(self):
        self.states = [np.asarray(s, dtype=float) for s in self.states]
        self.proposals = [None if p is None else np.asarray(p, dtype=float) for p in self.proposals]
        if len(self.proposals) != len(self.states):
            raise ContractViolation("states and proposals must cover the same levels")

    @property
    def L(self) -> int:
        return len(self.states) - 1

    @property
    def n_top(self) -> int:
        return self.states[-1].size

    @classmethod
    def from_records(cls, records, post_burn_in: bool = True) -> "MultilevelSamples":
        """Collect QoI streams from per-level chain records of an estimator-mode run."""
        states, props = [], []
        for ell, rec in enumerate(records):
            start = rec.burn_in if post_burn_in else 0
            states.append(rec.qoi[start:])
            if ell == 0:
                props.append(None)
            else:
                if rec.proposal_qoi is None:
                    raise ContractViolation(f"level {ell} record has no coarse-proposal QoI")
                props.append(rec.proposal_qoi[start:])
        lengths = []
        for ell in range(1, len(records)):
            n_here, n_below = len(records[ell]), len(records[ell - 1])
            lengths.append(n_below // n_here if n_here else 0)
        return cls(states, props, tuple(lengths))

    def check_counts(self, subchain_lengths=None) -> None:
        """Enforce ``N_l = N * prod(J_{l+1..L})`` and matching proposal lengths."""
        lengths = tuple(subchain_lengths) if subchain_lengths is not None else self.subchain_lengths
        if self.L and len(lengths) != self.L:
            raise ContractViolation(f"need {self.L} subchain lengths, got {len(lengths)}")
        expected = self.n_top
        for ell in range(self.L, -1, -1):
            n = self.states[ell].size
            if n != expected:
                raise ContractViolation(f"level {ell} has {n} QoI values, expected {expected}")
            if ell >= 1:
                p = self.proposals[ell]
                if p is None or p.size != n:
                    got = None if p is None else p.size
                    raise ContractViolation(f"level {ell} has {got} proposal QoI values, expected {n}")
                expected *= lengths[ell - 1]

    def corrections(self, ell: int) -> np.ndarray:
        """``Q_l(theta_l^j) - Q_{l-1}(psi_{l-1}^j)`` for every level-``l`` iteration."""
        if ell < 1:
            raise ContractViolation("corrections start at level 1")
        return self.states[ell] - self.proposals[ell]


def mlda_estimate(samples: MultilevelSamples, subchain_lengths=None) -> float:
    """Coarsest-level mean plus the mean correction of every finer level."""
    samples.check_counts(subchain_lengths)
    total = [_mean(samples.states[0])]
    total += [_mean(samples.corrections(ell)) for ell in range(1, samples.L + 1)]
    return math.fsum(total)


def batch_means_se(values, n_batches=None) -> float:
    """Standard error of a chain mean from ``sqrt(N)`` non-overlapping batches."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 4:
        raise ContractViolation("batch means need at least four values")
    b = int(n_batches) if n_batches is not None else int(math.isqrt(n))
    b = max(2, min(b, n))
    size = n // b
    means = values[: b * size].reshape(b, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(b))


@dataclass
class LevelSummary:
    level: int
    n: int
    mean: float
    variance: float
    standard_error: float


def level_summaries(samples: MultilevelSamples) -> list:
    """Mean, variance and batch-means SE of each telescoping term.

    Term 0 is ``Q_0`` itself; term ``l >= 1`` is the level-``l`` correction.
    Reporting the variances lets users balance subchain lengths by hand.
    """
    out = []
    for ell in range(samples.L + 1):
        v = samples.states[0] if ell == 0 else samples.corrections(ell)
        var = float(np.var(v, ddof=1)) if v.size > 1 else float("nan")
        se = batch_means_se(v) if v.size >= 4 else float("nan")
        out.append(LevelSummary(ell, int(v.size), _mean(v), var, se))
    return out


def mlda_standard_error(samples: MultilevelSamples) -> float:
    """Combined SE of the multilevel estimate, treating terms as independent."""
    return math.sqrt(sum(s.standard_error ** 2 for s in level_summaries(samples)))


def _running_mean(values, counts) -> np.ndarray:
    csum = np.cumsum(np.asarray(values, dtype=float))
    counts = np.asarray(counts)
    return csum[counts - 1] / counts


def running_estimates(samples: MultilevelSamples, subchain_lengths=None) -> tuple:
    """Standard and multilevel estimates after each top-level iteration ``n = 1..N``."""
    samples.check_counts(subchain_lengths)
    lengths = subchain_lengths if subchain_lengths is not None else samples.subchain_lengths
    n_top = samples.n_top
    n = np.arange(1, n_top + 1)
    standard = _running_mean(samples.states[-1], n)
    # level l holds prod(J_{l+1..L}) entries per top-level iteration
    per_top = [int(np.prod(lengths[ell:])) if ell < samples.L else 1 for ell in range(samples.L + 1)]
    multi = _running_mean(samples.states[0], n * per_top[0])
    for ell in range(1, samples.L + 1):
        multi = multi + _running_mean(samples.corrections(ell), n * per_top[ell])
    return standard, multi


def error_trace(samples: MultilevelSamples, reference: float, subchain_lengths=None) -> dict:
    """Running absolute error of both estimators against ``reference``.

    Returns ``{"n": ..., "standard": ..., "multilevel": ...}`` arrays.
    """
    standard, multi = running_estimates(samples, subchain_lengths)
    return {
        "n": np.arange(1, standard.size + 1),
        "standard": np.abs(standard - reference),
        "multilevel": np.abs(multi - reference),
    }
