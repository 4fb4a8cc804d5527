import math

import numpy as np
import pytest

from pmrf_lab import gaussian_oracle as go
from pmrf_lab.flows import euler_integrate
from pmrf_lab.harness import oracle_check
from pmrf_lab.tensor_core import RngKey

ONE = go.ScalarNoiseModel(1.0)
ROOT3 = go.ScalarNoiseModel(math.sqrt(3.0))


def test_model_validation():
    with pytest.raises(ValueError):
        go.ScalarNoiseModel(0.0)


@pytest.mark.parametrize("y,model,expected", [(2.0, ONE, 1.0), (0.0, ROOT3, 0.0), (3.0, ROOT3, 0.75)])
def test_posterior_mean(y, model, expected):
    assert go.posterior_mean_1d(y, model) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("y,model,expected", [(2.0, ONE, math.sqrt(2)), (0.0, ONE, 0.0), (3.0, ROOT3, 1.5)])
def test_x0_estimate(y, model, expected):
    assert go.x0_estimate_1d(y, model) == pytest.approx(expected, abs=1e-15)


def test_pmrf_field():
    assert go.pmrf_vector_field_1d(1.0, 1.0, ONE) == pytest.approx(0.5)
    assert go.pmrf_vector_field_1d(7.3, 0.0, ROOT3) == 0.0
    assert go.pmrf_vector_field_1d(2.0, 0.5, ONE) == pytest.approx(0.8)


def test_pmrf_solution():
    assert go.pmrf_ode_solution_1d(1.0, 1.0, ONE) == pytest.approx(math.sqrt(2))
    assert go.pmrf_ode_solution_1d(0.37, 0.0, ROOT3) == pytest.approx(0.37)
    c = go.posterior_mean_1d(1.0, ONE)
    assert c == 0.5
    assert go.pmrf_ode_solution_1d(c, 1.0, ONE) == pytest.approx(go.x0_estimate_1d(1.0, ONE), abs=1e-15)


def test_pmrf_solution_solves_ode():
    # central difference in t of the closed form must equal the field
    for t in np.linspace(0.05, 0.95, 10):
        h = 1e-6
        c = 0.8
        deriv = (go.pmrf_ode_solution_1d(c, t + h, ROOT3) - go.pmrf_ode_solution_1d(c, t - h, ROOT3)) / (2 * h)
        z = go.pmrf_ode_solution_1d(c, t, ROOT3)
        assert deriv == pytest.approx(go.pmrf_vector_field_1d(z, t, ROOT3), rel=1e-7)


def test_flowy_field_and_solution():
    assert go.flowy_vector_field_1d(2.0, 0.5, ONE) == pytest.approx(-0.8)
    assert go.flowy_vector_field_1d(5.0, 1.0, ROOT3) == 0.0
    assert go.flowy_vector_field_1d(1.0, 0.0, ONE) == pytest.approx(-0.5)
    assert go.flowy_ode_solution_1d(2.0, 1.0, ONE) == pytest.approx(math.sqrt(2))
    assert go.flowy_ode_solution_1d(0.3, 0.0, ROOT3) == pytest.approx(0.3)
    assert go.flowy_ode_solution_1d(2.0, 0.5, ONE) == pytest.approx(2 * math.sqrt(1.25) / math.sqrt(2))
    assert go.flowy_ode_solution_1d(2.0, 0.5, ONE) == pytest.approx(1.5811388, abs=1e-7)


def test_flowy_solution_solves_ode():
    for t in np.linspace(0.05, 0.95, 10):
        h = 1e-6
        deriv = (go.flowy_ode_solution_1d(1.3, t + h, ONE) - go.flowy_ode_solution_1d(1.3, t - h, ONE)) / (2 * h)
        z = go.flowy_ode_solution_1d(1.3, t, ONE)
        assert deriv == pytest.approx(go.flowy_vector_field_1d(z, t, ONE), rel=1e-7)


def test_analytic_mses_values():
    a = go.analytic_mses(ONE)
    assert (a.mmse, a.posterior_sampler_mse) == (0.5, 1.0)
    assert a.x0_mse == pytest.approx(2 - math.sqrt(2))
    b = go.analytic_mses(ROOT3)
    assert (b.mmse, b.posterior_sampler_mse, b.x0_mse) == pytest.approx((0.75, 1.5, 1.0))
    tiny = go.analytic_mses(go.ScalarNoiseModel(1e-6))
    assert max(tiny.mmse, tiny.posterior_sampler_mse, tiny.x0_mse) < 1e-11


@pytest.mark.parametrize("sigma", [1.0, math.sqrt(3.0)])
def test_analytic_mses_against_monte_carlo(sigma):
    # 10^7 joint draws; each estimate must sit within 3 standard errors
    m = go.ScalarNoiseModel(sigma)
    a = go.analytic_mses(m)
    n = 10**7
    key = RngKey(2024)
    cases = [
        (lambda y: go.posterior_mean_1d(y, m), False, a.mmse),
        (lambda y, k: go.posterior_sample_1d(y, m, k), True, a.posterior_sampler_mse),
        (lambda y: go.x0_estimate_1d(y, m), False, a.x0_mse),
    ]
    for i, (est, is_sampler, expected) in enumerate(cases):
        got = go.monte_carlo_mse(est, m, n, key.child(i), sampler=is_sampler)
        # squared error of a zero-mean Gaussian residual has std sqrt(2) * mse
        se = math.sqrt(2.0) * expected / math.sqrt(n)
        assert abs(got - expected) < 3 * se, (i, got, expected)


def test_monte_carlo_examples():
    key = RngKey(5)
    n = 10**6
    assert go.monte_carlo_mse(lambda y: go.posterior_mean_1d(y, ONE), ONE, n, key) == pytest.approx(0.5, abs=0.005)
    assert go.monte_carlo_mse(lambda y: y, ONE, n, key) == pytest.approx(1.0, abs=0.01)
    assert go.monte_carlo_mse(lambda y: go.x0_estimate_1d(y, ONE), ONE, n, key) == pytest.approx(0.5857864, abs=0.01)


def test_monte_carlo_is_deterministic():
    f = lambda y: go.posterior_mean_1d(y, ONE)
    assert go.monte_carlo_mse(f, ONE, 1000, RngKey(1)) == go.monte_carlo_mse(f, ONE, 1000, RngKey(1))


@pytest.mark.parametrize("sigma", np.geomspace(0.01, 100, 25))
def test_ordering(sigma):
    a = go.analytic_mses(go.ScalarNoiseModel(float(sigma)))
    assert 0 < a.mmse < a.x0_mse < a.posterior_sampler_mse
    assert a.posterior_sampler_mse == 2 * a.mmse


@pytest.mark.parametrize("sigma", [0.3, 1.0, 2.0])
def test_endpoint_identity_on_grid(sigma):
    m = go.ScalarNoiseModel(sigma)
    y = np.arange(-40, 41) * 0.1
    np.testing.assert_allclose(go.pmrf_ode_solution_1d(go.posterior_mean_1d(y, m), 1.0, m), go.x0_estimate_1d(y, m),
                               rtol=0, atol=1e-12)
    np.testing.assert_allclose(go.flowy_ode_solution_1d(y, 1.0, m), go.x0_estimate_1d(y, m), rtol=0, atol=1e-12)


def test_euler_order_one():
    for sigma in (0.3, 1.0, 2.0):
        errs = oracle_check.euler_errors(go.ScalarNoiseModel(sigma))
        assert all(a > b for a, b in zip(errs, errs[1:]))
        for a, b in zip(errs, errs[1:]):
            assert 1.6 <= a / b <= 2.4


def test_euler_from_posterior_mean():
    f = lambda z, t, cond=None: go.pmrf_vector_field_1d(z, t, ONE)
    z = euler_integrate(f, np.array([0.5]), 1000)
    assert z[0] == pytest.approx(math.sqrt(2) / 2, abs=1e-3)


def test_distribution_preservation():
    _, y = go.sample_joint(ONE, 10**6, RngKey(9))
    z1 = go.pmrf_ode_solution_1d(go.posterior_mean_1d(y, ONE), 1.0, ONE)
    assert np.var(go.posterior_mean_1d(y, ONE)) == pytest.approx(0.5, rel=0.01)
    assert np.var(z1) == pytest.approx(1.0, rel=0.01)


def test_oracle_check_suite_passes():
    results = oracle_check.run_all()
    assert all(r.passed for r in results), oracle_check.format_table(results)
