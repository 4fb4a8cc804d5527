"""Invariant suite for the scalar Gaussian closed forms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import gaussian_oracle as go
from ..flows import euler_integrate
from ..tensor_core import RngKey

SIGMAS = (0.3, 1.0, 2.0)
Y_GRID = np.round(np.arange(-40, 41) * 0.1, 10)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _oracle_field(model):
    return lambda z, t, cond=None: go.pmrf_vector_field_1d(z, t, model)


def check_endpoint_identity() -> CheckResult:
    worst = 0.0
    for s in SIGMAS:
        m = go.ScalarNoiseModel(s)
        got = go.pmrf_ode_solution_1d(go.posterior_mean_1d(Y_GRID, m), 1.0, m)
        worst = max(worst, float(np.max(np.abs(got - go.x0_estimate_1d(Y_GRID, m)))))
    return CheckResult("analytic PMRF endpoint == X0", worst <= 1e-12, f"max |diff| = {worst:.2e}")


def check_euler_endpoint(k: int = 1000) -> CheckResult:
    worst = 0.0
    for s in SIGMAS:
        m = go.ScalarNoiseModel(s)
        z = euler_integrate(_oracle_field(m), go.posterior_mean_1d(Y_GRID, m), k)
        x0 = go.x0_estimate_1d(Y_GRID, m)
        nz = np.abs(x0) > 0
        worst = max(worst, float(np.max(np.abs(z[nz] - x0[nz]) / np.abs(x0[nz]))))
        if np.any(z[~nz] != 0):
            worst = np.inf
    return CheckResult(f"Euler K={k} endpoint ~ X0", worst <= 1e-3, f"max rel err = {worst:.2e}")


def euler_errors(model, ks=(125, 250, 500, 1000), y: float = 1.0):
    c = go.posterior_mean_1d(np.array([y]), model)
    exact = go.x0_estimate_1d(y, model)
    return [abs(float(euler_integrate(_oracle_field(model), c, k)[0]) - exact) for k in ks]


def check_euler_order() -> CheckResult:
    ratios = []
    for s in SIGMAS:
        errs = euler_errors(go.ScalarNoiseModel(s))
        ratios += [a / b for a, b in zip(errs[:-1], errs[1:])]
    ok = all(1.6 <= r <= 2.4 for r in ratios)
    return CheckResult("Euler order 1 (error halves as K doubles)", ok,
                       "ratios " + ", ".join(f"{r:.3f}" for r in ratios))


def check_flowy_equivalence() -> CheckResult:
    worst = 0.0
    for s in SIGMAS:
        m = go.ScalarNoiseModel(s)
        a = go.flowy_ode_solution_1d(Y_GRID, 1.0, m)
        b = go.pmrf_ode_solution_1d(go.posterior_mean_1d(Y_GRID, m), 1.0, m)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return CheckResult("flow-from-Y endpoint == PMRF endpoint", worst <= 1e-12, f"max |diff| = {worst:.2e}")


def check_ordering() -> CheckResult:
    ok = True
    for s in np.geomspace(1e-3, 1e3, 61):
        a = go.analytic_mses(go.ScalarNoiseModel(float(s)))
        ok &= a.mmse < a.x0_mse < a.posterior_sampler_mse
    return CheckResult("MMSE < X0 MSE < 2 MMSE", bool(ok), "61 noise levels in [1e-3, 1e3]")


def mc_mses(sigma: float = 1.0, n: int = 1_000_000, seed: int = 0):
    m = go.ScalarNoiseModel(sigma)
    key = RngKey(seed)
    mmse = go.monte_carlo_mse(lambda y: go.posterior_mean_1d(y, m), m, n, key.child("mmse"))
    ps = go.monte_carlo_mse(lambda y, k: go.posterior_sample_1d(y, m, k), m, n, key.child("ps"), sampler=True)
    x0 = go.monte_carlo_mse(lambda y: go.x0_estimate_1d(y, m), m, n, key.child("x0"))
    return mmse, ps, x0


def check_mc_mses(n: int = 1_000_000) -> CheckResult:
    a = go.analytic_mses(go.ScalarNoiseModel(1.0))
    mmse, ps, x0 = mc_mses(1.0, n)
    ok = abs(mmse - a.mmse) <= 0.005 and abs(ps - a.posterior_sampler_mse) <= 0.01 and abs(x0 - a.x0_mse) <= 0.01
    ok = ok and mmse < x0 < 2 * mmse
    return CheckResult("Monte Carlo MSEs (sigma_N=1)", ok, f"mmse {mmse:.4f}, sampler {ps:.4f}, x0 {x0:.4f}")


def check_distribution_preservation(n: int = 1_000_000) -> CheckResult:
    m = go.ScalarNoiseModel(1.0)
    _, y = go.sample_joint(m, n, RngKey(7))
    z1 = go.pmrf_ode_solution_1d(go.posterior_mean_1d(y, m), 1.0, m)
    var = float(np.var(z1))
    return CheckResult("PMRF pushes X* to unit variance", abs(var - 1.0) <= 0.01, f"var = {var:.4f}")


def run_all(mc_n: int = 1_000_000) -> list:
    return [
        check_endpoint_identity(),
        check_euler_endpoint(),
        check_euler_order(),
        check_flowy_equivalence(),
        check_ordering(),
        check_mc_mses(mc_n),
        check_distribution_preservation(mc_n),
    ]


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  detail", "-" * (width + 40)]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)
