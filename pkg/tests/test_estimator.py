import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlda.estimator import (
    MultilevelSamples,
    batch_means_se,
    error_trace,
    level_summaries,
    mlda_estimate,
    mlda_standard_error,
    running_estimates,
    standard_estimate,
)
from mlda.model import ContractViolation
from mlda.proposals import IdentityFineProposal, RandomWalkProposal, SubchainPmf
from mlda.samplers import MldaConfig, mlda_run

import discrete as ds


def test_constant_qoi_gives_the_constant():
    samples = MultilevelSamples([np.full(12, 3.5), np.full(4, 3.5)], [None, np.full(4, 3.5)])
    assert mlda_estimate(samples, [3]) == 3.5
    assert standard_estimate(samples.states[-1]) == 3.5


def test_single_level_estimates_coincide():
    q = np.random.default_rng(0).normal(size=50)
    samples = MultilevelSamples([q], [None])
    assert mlda_estimate(samples, []) == standard_estimate(q)


def test_two_level_hand_computed():
    # 2 top iterations, J = 2: Q0 = [1, 2, 3, 4], Q1 = [10, 20], Q0(psi) = [2, 4]
    samples = MultilevelSamples([[1, 2, 3, 4], [10, 20]], [None, [2, 4]])
    assert mlda_estimate(samples, [2]) == pytest.approx(2.5 + 12.0, abs=0)


def test_count_mismatch_names_the_level():
    samples = MultilevelSamples([np.zeros(5), np.zeros(2)], [None, np.zeros(2)])
    with pytest.raises(ContractViolation, match="level 0"):
        mlda_estimate(samples, [3])


def test_missing_proposal_stream_rejected():
    samples = MultilevelSamples([np.zeros(4), np.zeros(2)], [None, np.zeros(1)])
    with pytest.raises(ContractViolation, match="level 1"):
        samples.check_counts([2])


def test_mean_is_exactly_rounded():
    values = [1e16, 1.0, -1e16, 1.0] * 250
    assert standard_estimate(values) == 0.5
    assert math.fsum(values) / len(values) == standard_estimate(values)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200))
def test_standard_estimate_matches_exact_mean(values):
    assert standard_estimate(values) == math.fsum(values) / len(values)


def test_running_estimates_end_at_full_estimates():
    rng = np.random.default_rng(4)
    samples = MultilevelSamples([rng.normal(size=60), rng.normal(size=20), rng.normal(size=4)],
                                [None, rng.normal(size=20), rng.normal(size=4)])
    standard, multi = running_estimates(samples, [3, 5])
    assert standard[-1] == pytest.approx(standard_estimate(samples.states[-1]), rel=1e-12)
    assert multi[-1] == pytest.approx(mlda_estimate(samples, [3, 5]), rel=1e-12)
    trace = error_trace(samples, 0.25, [3, 5])
    np.testing.assert_allclose(trace["multilevel"], np.abs(multi - 0.25))
    assert list(trace["n"]) == [1, 2, 3, 4]


def test_batch_means_se_of_iid_noise():
    rng = np.random.default_rng(1)
    ses = [batch_means_se(rng.normal(size=10000)) for _ in range(200)]
    assert np.mean(ses) == pytest.approx(0.01, rel=0.1)


def test_batch_means_se_needs_four_values():
    with pytest.raises(ContractViolation):
        batch_means_se([1.0, 2.0, 3.0])


def test_records_from_estimator_run_feed_the_estimator():
    h = ds.hierarchy_from_tables([[0.2, 0.3, 0.5], np.full(9, 1 / 9), np.full(9, 1 / 9)], [1, 2, 2], 3)
    for lev in h.levels:
        lev.qoi = lambda values, output: float(values[0])
    cfg = MldaConfig([SubchainPmf(2), SubchainPmf(3)], n_steps=40, burn_in=5, estimator=True)
    fine_prop, _ = ds.weighted_fine_draws([1, 1, 1])
    recs = mlda_run(h, cfg, ds.CyclicWalk(3), [0.0, 0.0], np.random.default_rng(2),
                    fine_proposals=[fine_prop, IdentityFineProposal()])
    samples = MultilevelSamples.from_records(recs)
    assert samples.subchain_lengths == (2, 3)
    assert [s.size for s in samples.states] == [240, 120, 40]
    est = mlda_estimate(samples)
    manual = (np.mean(samples.states[0]) + np.mean(samples.states[1] - samples.proposals[1])
              + np.mean(samples.states[2] - samples.proposals[2]))
    assert est == pytest.approx(manual, rel=1e-12)
    summaries = level_summaries(samples)
    assert [s.n for s in summaries] == [240, 120, 40]
    assert mlda_standard_error(samples) > 0


def test_attributed_proposal_is_rejected_proposals_too():
    """The proposal QoI is logged on rejected iterations as well."""
    fine = ds.prior_only_level(lambda x: float(-0.5 * x @ x), 1)
    coarse = ds.prior_only_level(lambda x: float(-0.5 * (x - 1.0) @ (x - 1.0)), 1)
    for lev in (fine, coarse):
        lev.qoi = lambda values, output: float(values[0])
    from mlda.model import ModelHierarchy

    h = ModelHierarchy([coarse, fine], [1, 1])
    recs = mlda_run(h, MldaConfig([SubchainPmf(4)], n_steps=400, estimator=True), RandomWalkProposal(1.0), [0.0],
                    np.random.default_rng(3))
    top = recs[-1]
    rejected = ~top.accepted
    assert rejected.any()
    assert np.all(np.isfinite(top.proposal_qoi[rejected]))
    # on acceptance the new state's coarse modes are the attributed proposal
    np.testing.assert_array_equal(top.proposal_qoi[top.accepted], top.states[top.accepted, 0])
