import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import solve_ivp

from mlda import kernels
from mlda.problems.base import LinearGaussianProblem, generate_synthetic_data
from mlda.problems.darcy import DarcyMesh, DarcyProblem, mesh_sizes, observation_lattice
from mlda.problems.gravity import GravityProblem, assemble_gravity_matrix
from mlda.problems.ode import IntegrationError, integrate_rk45
from mlda.problems.predator_prey import PredatorPreyProblem, TRUE_PARAMETERS
from mlda.random_field import CovarianceKernel, TensorGrid, field_expansion, trapezoid_weights


# gravity

def test_gravity_entry_directly_above():
    A = assemble_gravity_matrix(20, 20, 0.1)
    # surface and subsurface midpoints coincide in plan, so the diagonal is d * w / d^3
    assert A[0, 0] == pytest.approx(0.25, rel=1e-14)
    assert np.all(A > 0)
    assert A.shape == (400, 400)


def test_gravity_matrix_matches_double_loop():
    m, n, d = 4, 3, 0.2
    A = assemble_gravity_matrix(m, n, d)
    ref = np.empty((n * n, m * m))
    for i in range(n * n):
        sx, sy = ((i % n) + 0.5) / n, ((i // n) + 0.5) / n
        for j in range(m * m):
            tx, ty = ((j % m) + 0.5) / m, ((j // m) + 0.5) / m
            r = math.sqrt((sx - tx) ** 2 + (sy - ty) ** 2 + d * d)
            ref[i, j] = d / (m * m) / r ** 3
    np.testing.assert_allclose(A, ref, rtol=1e-14)


@pytest.fixture(scope="module")
def gravity():
    return GravityProblem([6, 12], n=5, n_modes=8)


def test_gravity_forward_is_linear(gravity):
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=8), rng.normal(size=8)
    for ell in (0, 1):
        np.testing.assert_allclose(gravity.forward(2 * a + b, ell),
                                   2 * gravity.forward(a, ell) + gravity.forward(b, ell), rtol=1e-12, atol=1e-14)
        np.testing.assert_array_equal(gravity.forward(np.zeros(8), ell), 0.0)
        np.testing.assert_allclose(gravity.forward(a, ell), gravity.linear_operator(ell) @ a, rtol=1e-12)


def test_gravity_map_point_is_the_posterior_mode(gravity):
    data = gravity.forward(np.random.default_rng(1).normal(size=8), 1)
    theta = gravity.map_point(data)
    G = gravity.linear_operator(1)
    grad = -theta + G.T @ (data - G @ theta) / gravity.noise_sd ** 2
    assert np.max(np.abs(grad)) < 1e-8


# ODE integrator

def test_rk45_exponential_decay():
    _, y = integrate_rk45(lambda t, y: -y, [1.0], (0.0, 1.0), rel_tol=1e-8, abs_tol=1e-12)
    assert abs(y[-1, 0] - math.exp(-1.0)) <= 1e-6


def test_rk45_zero_rhs_is_constant():
    _, y = integrate_rk45(lambda t, y: np.zeros(2), [1.5, -2.0], (0.0, 3.0), t_eval=[0.0, 1.0, 3.0])
    np.testing.assert_array_equal(y, [[1.5, -2.0]] * 3)


def test_rk45_agrees_with_scipy():
    rhs = lambda t, y: np.array([y[1], -y[0]])  # noqa: E731
    t_eval = np.linspace(0, 5, 11)
    _, ours = integrate_rk45(rhs, [1.0, 0.0], (0, 5), rel_tol=1e-10, abs_tol=1e-12, t_eval=t_eval)
    ref = solve_ivp(rhs, (0, 5), [1.0, 0.0], rtol=1e-12, atol=1e-14, t_eval=t_eval).y.T
    np.testing.assert_allclose(ours, ref, atol=1e-8)
    np.testing.assert_allclose(ours[:, 0], np.cos(t_eval), atol=1e-8)


def test_rk45_step_budget():
    with pytest.raises(IntegrationError):
        integrate_rk45(lambda t, y: -50 * y, [1.0], (0.0, 10.0), max_steps=5)


@pytest.mark.parametrize("solve", [kernels.solve_lotka_volterra_python, kernels.solve_lotka_volterra])
def test_lotka_volterra_decoupled_closed_form(solve):
    t = np.linspace(0, 2, 9)
    out = solve([2.0, 3.0, 0.5, 0.0, 0.0, 0.7], t, 2.0, 1e-10, 1e-12)
    np.testing.assert_allclose(out[:, 0], 2.0 * np.exp(0.5 * t), rtol=1e-8)
    np.testing.assert_allclose(out[:, 1], 3.0 * np.exp(-0.7 * t), rtol=1e-8)


# predator-prey

@pytest.fixture(scope="module")
def lv():
    return PredatorPreyProblem()


def test_window_levels_see_prefixes(lv):
    assert lv.n_times == [9, 17, 25]
    fine = lv.forward(TRUE_PARAMETERS, 2)
    for ell in (0, 1):
        coarse = lv.forward(TRUE_PARAMETERS, ell)
        assert coarse.size == 2 * lv.n_times[ell]
        np.testing.assert_allclose(coarse, fine[: coarse.size], rtol=1e-4)
        np.testing.assert_array_equal(lv.observed(fine, ell), fine[: coarse.size])


def test_predator_prey_prior(lv):
    theta = np.array([10.0, 5.0, 2.0, 0.4, 0.6, 1.0])
    ref = sum(d.logpdf(x) for d, x in zip(lv.priors, theta))
    assert lv.log_prior(theta) == pytest.approx(ref, rel=1e-12)
    assert lv.log_prior([10.0, 5.0, 2.0, -0.1, 0.6, 1.0]) == -np.inf
    draws = np.array([lv.sample_prior(np.random.default_rng(i)) for i in range(200)])
    assert np.all(draws[:, 3:5] > 0)
    assert stats.ttest_1samp(draws[:, 0], 10.8).pvalue > 1e-3


def test_mean_predator_qoi_uses_full_window(lv):
    full = lv.mean_predator(TRUE_PARAMETERS)
    coarse_out = lv.forward(TRUE_PARAMETERS, 0)
    assert lv.qoi(0)(TRUE_PARAMETERS, coarse_out) == pytest.approx(full, rel=1e-12)
    assert lv.qoi(2)(TRUE_PARAMETERS, lv.forward(TRUE_PARAMETERS, 2)) == pytest.approx(full, rel=1e-12)


# Darcy

def test_darcy_mesh_sizes_and_lattice():
    assert mesh_sizes(5, 3) == [5, 17, 65]
    pts = observation_lattice(5)
    assert pts.shape == (25, 2)
    np.testing.assert_allclose(np.unique(pts[:, 0]), np.arange(1, 6) / 6)


@pytest.fixture(scope="module")
def darcy():
    return DarcyProblem(m0=5, n_levels=2, n_modes=8)


def test_unit_permeability_gives_linear_head(darcy):
    for ell in (0, 1):
        p = darcy.solve(np.zeros(8), ell)
        np.testing.assert_allclose(p, darcy.levels[ell].nodes[:, 0], atol=1e-12)
        np.testing.assert_allclose(darcy.forward(np.zeros(8), ell), darcy.obs_points[:, 0], atol=1e-12)


def test_fluxes_balance(darcy):
    theta = np.random.default_rng(2).normal(size=8)
    for ell in (0, 1):
        inflow, outflow = darcy.boundary_fluxes(theta, ell)
        assert abs(inflow + outflow) <= 1e-10
        assert outflow > 0


def test_heads_converge_under_mesh_refinement():
    kl = field_expansion(CovarianceKernel("squared_exponential", 1.0, 0.3), TensorGrid.nodes(9),
                         trapezoid_weights(9), 4)
    theta = np.array([0.8, -0.5, 0.3, 0.2])
    obs = observation_lattice(5)
    heads = {m: DarcyMesh(m, kl, obs) for m in (5, 17, 65, 257)}
    ref = heads[257].observe @ heads[257].solve(theta)
    errors = [np.max(np.abs(heads[m].observe @ heads[m].solve(theta) - ref)) for m in (5, 17, 65)]
    assert errors[0] > errors[1] > errors[2]


# synthetic data and linear-Gaussian reference

def test_synthetic_data_zero_noise_and_determinism(gravity):
    theta = np.random.default_rng(3).normal(size=8)
    clean = generate_synthetic_data(gravity, theta, noise_seed=5, noise_scale=0.0)
    np.testing.assert_array_equal(clean, gravity.forward(theta, 1))
    a = generate_synthetic_data(gravity, theta, 5)
    np.testing.assert_array_equal(a, generate_synthetic_data(gravity, theta, 5))
    assert not np.array_equal(a, generate_synthetic_data(gravity, theta, 6))


def test_linear_gaussian_posterior_moments():
    prob = LinearGaussianProblem([np.array([[2.0]])], noise_sd=1.0)
    mean, cov = prob.posterior_moments(np.array([1.0]))
    np.testing.assert_allclose(mean, [0.4])
    np.testing.assert_allclose(cov, [[0.2]])
    h = prob.hierarchy(np.array([1.0]))
    grid = np.linspace(-3, 3, 20001)
    logp = np.array([h[0].log_posterior(np.array([x])) for x in grid])
    w = np.exp(logp - logp.max())
    assert np.sum(grid * w) / np.sum(w) == pytest.approx(0.4, abs=1e-8)
