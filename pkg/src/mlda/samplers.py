"""Metropolis-Hastings, delayed acceptance and multilevel delayed acceptance.

All samplers work on unnormalised log-densities.  A target is either a plain
callable ``values -> log density`` or a :class:`~mlda.model.PosteriorLevel`;
the latter also yields forward outputs (needed by the adaptive error model)
and quantities of interest.

Random numbers are consumed in a fixed order so that the special cases line
up draw for draw under a shared generator:

* coarsest-level MH step: proposal draws, then one uniform;
* subchain length: one integer draw (none for a fixed-length pmf);
* fine-mode proposal draws (none for empty fine modes);
* second-stage uniform, drawn only when the proposal differs from the
  current state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .aem import BiasModel
from .model import ContractViolation, EvaluationError, ModelHierarchy, PosteriorLevel
from .proposals import (
    FineModeProposal,
    IdentityFineProposal,
    PriorFineProposal,
    Proposal,
    SubchainPmf,
    draw_subchain_length,
)


class StartupError(RuntimeError):
    """The initial state has no finite log-density."""


def accept_probability(log_num: float, log_den: float) -> float:
    """``min(1, exp(log_num - log_den))`` evaluated without overflow."""
    if log_num == -np.inf:
        return 0.0
    if log_den == -np.inf:
        return 1.0
    delta = log_num - log_den
    if delta >= 0.0:
        return 1.0
    return float(np.exp(delta))


class _Point:
    """A state with everything evaluated at it, cached for reuse on rejection.

    The QoI is computed on first access, so rejected candidates never pay
    for it.
    """

    __slots__ = ("values", "log_prior", "output", "log_like", "log_density", "coarse", "version",
                 "_qoi", "_qoi_fn")

    def __init__(self, values, log_prior, output, log_like, qoi_fn=None, version=0):
        self.values = values
        self.log_prior = log_prior
        self.output = output
        self.log_like = log_like
        self.log_density = log_prior + log_like
        self.coarse = None
        self.version = version
        self._qoi = None
        self._qoi_fn = qoi_fn

    @property
    def qoi(self) -> float:
        if self._qoi is None:
            fn = self._qoi_fn
            if fn is None or self.log_density == -np.inf:
                self._qoi = np.nan
            else:
                self._qoi = float(fn(self.values, self.output))
        return self._qoi


class _Target:
    """Uniform evaluation interface over callables and posterior levels."""

    def __init__(self, density, level: Optional[int] = None, bias: Optional[BiasModel] = None):
        self.density = density
        self.is_posterior = isinstance(density, PosteriorLevel)
        self.level = level
        self.bias = bias if (bias is not None and level is not None and level < bias.L) else None
        self.n_evaluations = 0
        self.n_failed = 0

    def _version(self):
        return self.bias.version if self.bias is not None else 0

    def _log_like(self, output):
        if self.bias is not None and output is not None:
            return self.bias.corrected_log_likelihood(self.level, output)
        return self.density.log_likelihood_from_output(output)

    def evaluate(self, values, strict=False) -> _Point:
        self.n_evaluations += 1
        if not self.is_posterior:
            return _Point(values, float(self.density(values)), None, 0.0)
        dens = self.density
        log_prior = float(dens.log_prior(values))
        if log_prior == -np.inf:
            return _Point(values, -np.inf, None, 0.0, None, self._version())
        try:
            output = dens.forward(values)
            log_like = self._log_like(output)
        except EvaluationError:
            if strict:
                raise
            self.n_failed += 1
            return _Point(values, -np.inf, None, 0.0, None, self._version())
        return _Point(values, log_prior, output, log_like, dens.qoi, self._version())

    def current(self, point: _Point) -> float:
        """Log-density of ``point`` under the present bias model."""
        if self.bias is not None and point.version != self.bias.version:
            if point.output is not None:
                point.log_like = self._log_like(point.output)
                point.log_density = point.log_prior + point.log_like
            point.version = self.bias.version
        return point.log_density


def _as_target(density, level=None, bias=None) -> _Target:
    return density if isinstance(density, _Target) else _Target(density, level, bias)


def _start(target: _Target, values) -> _Point:
    values = np.array(values, dtype=float)
    try:
        point = target.evaluate(values, strict=True)
    except EvaluationError as exc:
        raise StartupError(f"forward model failed at the initial state: {exc}") from exc
    if not np.isfinite(point.log_density):
        raise StartupError(f"initial state has log-density {point.log_density}")
    return point


@dataclass
class ChainRecord:
    """Per-iteration log of one level of a chain.

    Row ``j`` describes the state after iteration ``j``.  ``proposal_coarse``
    and ``proposal_qoi`` hold the coarse proposal drawn at iteration ``j``
    whether or not it was accepted; they are ``None`` at level 0.  ``states``
    may have zero columns when states were not recorded at a subchain level.
    """

    level: int
    states: np.ndarray
    log_posterior: np.ndarray
    accepted: np.ndarray
    qoi: np.ndarray
    proposal_coarse: Optional[np.ndarray] = None
    proposal_qoi: Optional[np.ndarray] = None
    burn_in: int = 0
    n_evaluations: int = 0
    n_failed: int = 0
    n_first_stage_accepted: int = 0

    def __len__(self):
        return self.log_posterior.size

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self) else float("nan")


class _Recorder:
    def __init__(self, level, dim, coarse_dim=None, keep_states=True):
        self.level = level
        self.dim = dim
        self.coarse_dim = coarse_dim
        self.keep_states = keep_states
        self.states = []
        self.logp = []
        self.accepted = []
        self.qoi = []
        self.prop = []
        self.prop_qoi = []
        self.first_stage = 0

    def add(self, point: _Point, accepted: bool, proposal: Optional[_Point] = None):
        if self.keep_states:
            self.states.append(point.values)
        self.logp.append(point.log_density)
        self.accepted.append(accepted)
        self.qoi.append(point.qoi)
        if proposal is not None:
            if self.keep_states:
                self.prop.append(proposal.values)
            self.prop_qoi.append(proposal.qoi)

    def finish(self, target: _Target, burn_in=0) -> ChainRecord:
        n = len(self.logp)
        if not self.keep_states:
            states = np.empty((n, 0))
        elif n == 0:
            states = np.empty((0, self.dim or 0))
        else:
            states = np.array(self.states, dtype=float)
        prop = prop_qoi = None
        if self.level > 0 and self.coarse_dim is not None:
            prop_qoi = np.array(self.prop_qoi, dtype=float)
            if self.keep_states:
                prop = np.array(self.prop, dtype=float).reshape(n, self.coarse_dim)
            else:
                prop = np.empty((n, 0))
        return ChainRecord(
            level=self.level,
            states=states,
            log_posterior=np.array(self.logp, dtype=float),
            accepted=np.array(self.accepted, dtype=bool),
            qoi=np.array(self.qoi, dtype=float),
            proposal_coarse=prop,
            proposal_qoi=prop_qoi,
            burn_in=burn_in,
            n_evaluations=target.n_evaluations,
            n_failed=target.n_failed,
            n_first_stage_accepted=self.first_stage,
        )


def _mh_step(target: _Target, proposal: Proposal, point: _Point, rng) -> tuple:
    current = target.current(point)
    cand = target.evaluate(proposal.propose(point.values, rng))
    log_num = cand.log_density
    if not proposal.symmetric:
        log_num = log_num + proposal.log_q_ratio(point.values, cand.values)
    accepted = rng.random() < accept_probability(log_num, current)
    proposal.observe(cand.values if accepted else point.values, accepted)
    return (cand if accepted else point), accepted


def _set_tuning(proposal: Proposal, on: bool):
    if on and not proposal.tuning:
        proposal.start_tuning()
    elif not on and proposal.tuning:
        proposal.stop_tuning()


def mh_run(target, proposal: Proposal, theta0, n_steps: int, rng, *, burn_in: int = 0) -> ChainRecord:
    """Metropolis-Hastings chain of ``burn_in + n_steps`` iterations.

    The proposal is tuned during the first ``burn_in`` iterations only.
    """
    target = _as_target(target)
    point = _start(target, theta0)
    rec = _Recorder(0, point.values.size)
    for j in range(burn_in + n_steps):
        _set_tuning(proposal, j < burn_in)
        point, accepted = _mh_step(target, proposal, point, rng)
        rec.add(point, accepted)
    _set_tuning(proposal, False)
    return rec.finish(target, burn_in)


def _second_stage(fine: _Target, coarse: _Target, point: _Point, psi: _Point, rng, log_q=0.0):
    """Surrogate-transition accept/reject; returns (next point, accepted)."""
    log_num = fine.current(psi) + coarse.current(point.coarse) + log_q
    log_den = fine.current(point) + coarse.current(psi.coarse)
    if rng.random() < accept_probability(log_num, log_den):
        return psi, True
    return point, False


def _pair_start(fine: _Target, coarse: _Target, theta0, n_coarse=None):
    point = _start(fine, theta0)
    values = point.values if n_coarse is None else point.values[:n_coarse]
    point.coarse = _start(coarse, values)
    return point


def da_run(target_fine, target_coarse, proposal: Proposal, theta0, n_steps: int, rng) -> ChainRecord:
    """Delayed acceptance: one coarse MH step screens each fine proposal."""
    fine, coarse = _as_target(target_fine), _as_target(target_coarse)
    point = _pair_start(fine, coarse, theta0)
    rec = _Recorder(1, point.values.size, point.values.size)
    for _ in range(n_steps):
        psi_c, moved = _mh_step(coarse, proposal, point.coarse, rng)
        if not moved:
            rec.add(point, False, psi_c)
            continue
        rec.first_stage += 1
        psi = fine.evaluate(psi_c.values)
        psi.coarse = psi_c
        point, accepted = _second_stage(fine, coarse, point, psi, rng)
        rec.add(point, accepted, psi_c)
    return rec.finish(fine)


def _subchain(coarse: _Target, proposal: Proposal, start: _Point, n: int, rng) -> _Point:
    point = start
    for _ in range(n):
        point, _ = _mh_step(coarse, proposal, point, rng)
    return point


def rst_run(target_fine, target_coarse, proposal: Proposal, pmf: SubchainPmf, theta0, n_steps: int,
            rng) -> ChainRecord:
    """Randomised-length-subchain surrogate transition."""
    fine, coarse = _as_target(target_fine), _as_target(target_coarse)
    point = _pair_start(fine, coarse, theta0)
    rec = _Recorder(1, point.values.size, point.values.size)
    for _ in range(n_steps):
        n = draw_subchain_length(pmf, rng)
        psi_c = _subchain(coarse, proposal, point.coarse, n, rng)
        if psi_c is point.coarse or np.array_equal(psi_c.values, point.values):
            rec.add(point, False, psi_c)
            continue
        rec.first_stage += 1
        psi = fine.evaluate(psi_c.values)
        psi.coarse = psi_c
        point, accepted = _second_stage(fine, coarse, point, psi, rng)
        rec.add(point, accepted, psi_c)
    return rec.finish(fine)


def tlda_run(target_fine, target_coarse, proposal: Proposal, fine_proposal: Optional[FineModeProposal],
             pmf: SubchainPmf, theta0, n_steps: int, rng, *, n_coarse: Optional[int] = None) -> ChainRecord:
    """Two-level delayed acceptance over a state split into coarse and fine modes.

    ``n_coarse`` is the number of leading coarse modes; by default the whole
    state is coarse and the fine modes are empty.
    """
    fine, coarse = _as_target(target_fine), _as_target(target_coarse)
    theta0 = np.asarray(theta0, dtype=float)
    nc = theta0.size if n_coarse is None else int(n_coarse)
    if fine_proposal is None:
        fine_proposal = IdentityFineProposal()
    point = _pair_start(fine, coarse, theta0, nc)
    rec = _Recorder(1, theta0.size, nc)
    for _ in range(n_steps):
        n = draw_subchain_length(pmf, rng)
        psi_c = _subchain(coarse, proposal, point.coarse, n, rng)
        theta_f = point.values[nc:]
        psi_f = fine_proposal.propose(theta_f, rng)
        if np.array_equal(psi_c.values, point.coarse.values) and np.array_equal(psi_f, theta_f):
            rec.add(point, False, psi_c)
            continue
        rec.first_stage += 1
        psi = fine.evaluate(np.concatenate([psi_c.values, psi_f]))
        psi.coarse = psi_c
        log_q = 0.0 if fine_proposal.symmetric else fine_proposal.log_q_ratio(theta_f, psi_f)
        point, accepted = _second_stage(fine, coarse, point, psi, rng, log_q)
        rec.add(point, accepted, psi_c)
    return rec.finish(fine)


@dataclass
class MldaConfig:
    """Sampler settings for :func:`mlda_run`.

    ``pmfs[l - 1]`` is the subchain-length pmf used by level ``l``.  With
    ``estimator=True`` every pmf must be uniform on ``1..J_l``; the proposal
    index is drawn from it but the subchain always runs ``J_l`` steps so that
    every subchain state contributes to the multilevel estimator.
    """

    pmfs: Sequence[SubchainPmf]
    n_steps: int
    burn_in: int = 0
    seed: int = 0
    estimator: bool = False
    adapt_error_model: bool = False
    adapt_after_burn_in: bool = False
    record_subchain_states: bool = True

    def __post_init__(self):
        self.pmfs = [p if isinstance(p, SubchainPmf) else SubchainPmf(int(p)) for p in self.pmfs]
        if self.n_steps < 1:
            raise ContractViolation("n_steps must be positive")
        if self.burn_in < 0:
            raise ContractViolation("burn_in must be non-negative")
        if self.estimator:
            for ell, p in enumerate(self.pmfs, start=1):
                if p.mode != "uniform":
                    raise ContractViolation(
                        f"estimator mode needs a uniform subchain pmf at level {ell}, got {p.mode!r}"
                    )

    @property
    def subchain_lengths(self):
        return [p.max_length for p in self.pmfs]


class _LevelSampler:
    """One level of the recursive MLDA kernel."""

    def __init__(self, level, target, below, proposal, fine_proposal, pmf, rng, n_coarse, bias,
                 estimator, keep_states):
        self.level = level
        self.target = target
        self.below = below
        self.proposal = proposal
        self.fine_proposal = fine_proposal
        self.pmf = pmf
        self.rng = rng
        self.n_coarse = n_coarse
        self.bias = bias
        self.estimator = estimator
        self.rec = _Recorder(level, None, n_coarse if level > 0 else None, keep_states)

    def iterate(self, point: _Point) -> _Point:
        if self.level == 0:
            point, accepted = _mh_step(self.target, self.proposal, point, self.rng)
            self.rec.add(point, accepted)
            return point
        rng = self.rng
        n = draw_subchain_length(self.pmf, rng)
        below = self.below
        start = point.coarse
        if self.estimator:
            psi_c = None
            sub = start
            for step in range(1, self.pmf.max_length + 1):
                sub = below.iterate(sub)
                if step == n:
                    psi_c = sub
        else:
            psi_c = start
            for _ in range(n):
                psi_c = below.iterate(psi_c)
        theta_f = point.values[self.n_coarse:]
        psi_f = self.fine_proposal.propose(theta_f, rng)
        if np.array_equal(psi_c.values, start.values) and np.array_equal(psi_f, theta_f):
            self.rec.add(point, False, psi_c)
            return point
        self.rec.first_stage += 1
        psi = self.target.evaluate(np.concatenate([psi_c.values, psi_f]) if psi_f.size else psi_c.values)
        psi.coarse = psi_c
        log_q = 0.0 if self.fine_proposal.symmetric else self.fine_proposal.log_q_ratio(theta_f, psi_f)
        nxt, accepted = _second_stage(self.target, below.target, point, psi, rng, log_q)
        bias = self.bias
        if bias is not None and bias.adapting and psi.output is not None and psi_c.output is not None:
            bias.update(self.level - 1, psi.output - psi_c.output)
        self.rec.add(nxt, accepted, psi_c)
        return nxt


def _as_streams(rng, n_levels, seed):
    if rng is None:
        from .rng import level_streams

        return level_streams(seed, 0, n_levels)
    if isinstance(rng, np.random.Generator):
        return [rng] * n_levels
    rng = list(rng)
    if len(rng) != n_levels:
        raise ContractViolation(f"need {n_levels} random streams, got {len(rng)}")
    return rng


def mlda_run(hierarchy: ModelHierarchy, config: MldaConfig, proposals: Proposal, theta0, rng=None, *,
             fine_proposals: Optional[Sequence[FineModeProposal]] = None,
             bias: Optional[BiasModel] = None) -> list:
    """Multilevel delayed acceptance on the finest level of ``hierarchy``.

    ``proposals`` is the coarsest-level kernel.  ``rng`` is a single generator
    shared by all levels, one generator per level, or ``None`` to derive
    per-level streams from ``config.seed``.  Returns one :class:`ChainRecord`
    per level, coarsest first.  Burn-in counts top-level iterations; proposal
    tuning and (unless ``config.adapt_after_burn_in``) error-model adaptation
    happen only then.
    """
    L = hierarchy.L
    if L < 1:
        raise ContractViolation("MLDA needs at least two levels")
    if len(config.pmfs) != L:
        raise ContractViolation(f"need {L} subchain pmfs, got {len(config.pmfs)}")
    part = hierarchy.partition
    streams = _as_streams(rng, L + 1, config.seed)
    if fine_proposals is None:
        fine_proposals = [PriorFineProposal.standard_normal() for _ in range(L)]
    if len(fine_proposals) != L:
        raise ContractViolation(f"need {L} fine-mode proposals, got {len(fine_proposals)}")
    if config.adapt_error_model and bias is None:
        bias = BiasModel.for_hierarchy(hierarchy)

    levels = []
    below = None
    for ell in range(L + 1):
        target = _Target(hierarchy[ell], ell, bias)
        keep = ell == L or config.record_subchain_states
        if ell == 0:
            lvl = _LevelSampler(0, target, None, proposals, None, None, streams[0], None, None, False, keep)
        else:
            lvl = _LevelSampler(ell, target, below, None, fine_proposals[ell - 1], config.pmfs[ell - 1],
                                streams[ell], part.n_coarse(ell), bias, config.estimator, keep)
        levels.append(lvl)
        below = lvl

    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (part.dim(L),):
        raise ContractViolation(f"initial state must have length {part.dim(L)}")
    point = _start(levels[L].target, theta0)
    cur = point
    for ell in range(L - 1, -1, -1):
        cur.coarse = _start(levels[ell].target, cur.values[: part.dim(ell)])
        cur = cur.coarse

    top = levels[L]
    total = config.burn_in + config.n_steps
    for j in range(total):
        in_burn_in = j < config.burn_in
        _set_tuning(proposals, in_burn_in)
        if bias is not None:
            bias.adapting = config.adapt_error_model and (in_burn_in or config.adapt_after_burn_in)
        point = top.iterate(point)
    _set_tuning(proposals, False)
    if bias is not None:
        bias.adapting = False

    records = []
    factor = 1
    for ell in range(L, -1, -1):
        lvl = levels[ell]
        lvl.rec.dim = part.dim(ell)
        if config.estimator:
            burn = config.burn_in * factor
        else:
            burn = config.burn_in if ell == L else 0
        records.append(lvl.rec.finish(lvl.target, burn))
        if ell > 0:
            factor *= config.pmfs[ell - 1].max_length
    return records[::-1]
