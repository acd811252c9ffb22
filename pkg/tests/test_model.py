import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlda.model import (
    ContractViolation,
    EvaluationError,
    LevelPartition,
    LevelState,
    ModelHierarchy,
    PosteriorLevel,
    join_state,
    log_likelihood,
    log_posterior,
    split_state,
)


def identity_level(data, cov, **kw):
    return PosteriorLevel(lambda x: x.copy(), np.asarray(data, float), cov, **kw)


def test_zero_residual_likelihood():
    lev = identity_level([1.0, 2.0], 0.5)
    assert log_likelihood(lev, LevelState(0, [1.0, 2.0])) == 0.0


def test_scalar_hand_computed():
    lev = identity_level([1.0], 1.0)
    assert log_likelihood(lev, LevelState(0, [0.0])) == -0.5


def test_isotropic_noise():
    lev = identity_level(np.zeros(3), 0.25)
    r = np.array([0.5, -1.0, 2.0])
    assert lev.log_likelihood(r) == pytest.approx(-(r @ r) / (2 * 0.25), rel=1e-15)


def test_diagonal_and_full_covariance_routes_agree():
    rng = np.random.default_rng(0)
    diag = rng.uniform(0.1, 2.0, size=5)
    data, theta = rng.normal(size=5), rng.normal(size=5)
    fast = identity_level(data, diag)
    # a tiny symmetric off-diagonal term forces the Cholesky route
    cov = np.diag(diag)
    cov[0, 1] = cov[1, 0] = 1e-300
    full = identity_level(data, cov)
    assert full._inv_sd is None and fast._inv_sd is not None
    assert fast.log_likelihood(theta) == pytest.approx(full.log_likelihood(theta), rel=1e-13)


def test_correlated_noise_matches_direct_solve():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(4, 4))
    cov = M @ M.T + np.eye(4)
    data, theta = rng.normal(size=4), rng.normal(size=4)
    r = theta - data
    assert identity_level(data, cov).log_likelihood(theta) == pytest.approx(
        -0.5 * r @ np.linalg.solve(cov, r), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 3, elements=st.floats(-1e3, 1e3)))
def test_likelihood_is_non_positive(theta):
    assert identity_level(np.ones(3), 0.3).log_likelihood(theta) <= 0.0


def test_flat_prior_posterior_equals_likelihood():
    lev = identity_level([0.3], 2.0)
    assert log_posterior(lev, LevelState(0, [1.1])) == lev.log_likelihood([1.1])


def test_gaussian_prior_hand_computed():
    c = -0.5 * np.log(2 * np.pi)
    lev = identity_level([1.0], 1.0, log_prior=lambda x: c - 0.5 * float(x @ x))
    assert lev.log_posterior([0.0]) == pytest.approx(-0.5 + c, rel=1e-15)


def test_prior_constant_cancels_in_differences():
    base = identity_level([1.0, 0.0], 0.5, log_prior=lambda x: -0.5 * float(x @ x))
    shifted = identity_level([1.0, 0.0], 0.5, log_prior=lambda x: -0.5 * float(x @ x) + 123.456)
    a, b = np.array([0.2, 0.3]), np.array([-1.0, 0.7])
    assert (shifted(a) - shifted(b)) == pytest.approx(base(a) - base(b), abs=1e-12)


def test_zero_prior_support_skips_the_forward_model():
    calls = []
    lev = PosteriorLevel(lambda x: calls.append(1) or x, np.zeros(1), 1.0, log_prior=lambda x: -np.inf)
    assert lev.log_posterior([1.0]) == -np.inf
    assert not calls


def test_contract_and_evaluation_errors():
    lev = identity_level([0.0, 0.0], 1.0, dim=2)
    with pytest.raises(ContractViolation):
        lev.log_likelihood([1.0, 2.0, 3.0])
    bad_shape = PosteriorLevel(lambda x: x[:1], np.zeros(2), 1.0)
    with pytest.raises(ContractViolation):
        bad_shape.log_likelihood(np.zeros(2))
    nan = PosteriorLevel(lambda x: x * np.nan, np.zeros(2), 1.0)
    with pytest.raises(EvaluationError) as info:
        nan.log_likelihood(np.array([1.0, 2.0]))
    np.testing.assert_array_equal(info.value.state, [1.0, 2.0])
    with pytest.raises(ContractViolation):
        PosteriorLevel(lambda x: x, np.zeros(2), np.eye(3))


def test_split_prefix():
    fine, coarse = split_state(LevelState(1, [1.0, 2.0, 3.0, 4.0]), LevelPartition([2, 4]))
    np.testing.assert_array_equal(fine, [3.0, 4.0])
    assert coarse == LevelState(0, [1.0, 2.0])


def test_split_with_equal_dims_has_empty_fine_modes():
    fine, coarse = split_state(LevelState(1, [1.0, 2.0, 3.0]), LevelPartition([3, 3]))
    assert fine.size == 0
    assert coarse == LevelState(0, [1.0, 2.0, 3.0])


def test_split_errors():
    p = LevelPartition([2, 4])
    with pytest.raises(ContractViolation):
        split_state(LevelState(0, [1.0, 2.0]), p)
    with pytest.raises(ContractViolation):
        split_state(LevelState(1, [1.0, 2.0, 3.0]), p)


@settings(max_examples=100, deadline=None)
@given(arrays(float, 5, elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_join_inverts_split_bitwise(values):
    theta = LevelState(2, values)
    fine, coarse = split_state(theta, LevelPartition([1, 3, 5]))
    back = join_state(fine, coarse)
    assert back.level == 2
    assert back.values.tobytes() == theta.values.tobytes()


def test_partition_validation():
    with pytest.raises(ContractViolation):
        LevelPartition([])
    with pytest.raises(ContractViolation):
        LevelPartition([3, 2])
    with pytest.raises(ContractViolation):
        LevelPartition([0, 2])
    assert LevelPartition([1, 3]).n_coarse(1) == 1


def test_hierarchy_checks_dimensions():
    levels = [identity_level([0.0], 1.0), identity_level([0.0, 0.0], 1.0)]
    h = ModelHierarchy(levels, [1, 2])
    assert h.L == 1 and len(h) == 2 and h[1].dim == 2
    with pytest.raises(ContractViolation):
        ModelHierarchy(levels[:1], [1, 2])
    with pytest.raises(ContractViolation):
        ModelHierarchy([identity_level([0.0], 1.0, dim=3)], [1])
