"""Closed forms for scalar Gaussian denoising, Y = X + N.

X ~ N(0, 1) and N ~ N(0, sigma_n**2) are independent. Every function here
works elementwise on floats or numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor_core import RngKey


@dataclass(frozen=True)
class ScalarNoiseModel:
    sigma_n: float

    def __post_init__(self):
        if not self.sigma_n > 0:
            raise ValueError(f"sigma_n must be positive, got {self.sigma_n}")

    @property
    def var(self) -> float:
        return self.sigma_n**2


@dataclass(frozen=True)
class AnalyticMses:
    mmse: float
    posterior_sampler_mse: float
    x0_mse: float


def posterior_mean_1d(y, model: ScalarNoiseModel):
    return y / (1.0 + model.var)


def x0_estimate_1d(y, model: ScalarNoiseModel):
    """Minimum-MSE estimator under the constraint that its law equals that of X."""
    return y / np.sqrt(1.0 + model.var)


def posterior_sample_1d(y, model: ScalarNoiseModel, key: RngKey):
    """Draw from p(x | y) = N(y / (1+s^2), s^2 / (1+s^2))."""
    y = np.asarray(y, dtype=np.float64)
    std = np.sqrt(model.var / (1.0 + model.var))
    return posterior_mean_1d(y, model) + std * key.generator().standard_normal(y.shape)


def pmrf_vector_field_1d(z, t, model: ScalarNoiseModel):
    s2 = model.var
    return t * s2 / (1.0 + t * t * s2) * z


def pmrf_ode_solution_1d(c, t, model: ScalarNoiseModel):
    return c * np.sqrt(1.0 + t * t * model.var)


def flowy_vector_field_1d(z, t, model: ScalarNoiseModel):
    s2 = model.var
    return (t - 1.0) * s2 / (s2 * (t * t - 2.0 * t + 1.0) + 1.0) * z


def flowy_ode_solution_1d(c, t, model: ScalarNoiseModel):
    s2 = model.var
    return c * np.sqrt(s2 * (t - 1.0) ** 2 + 1.0) / np.sqrt(1.0 + s2)


def analytic_mses(model: ScalarNoiseModel) -> AnalyticMses:
    s2 = model.var
    mmse = s2 / (1.0 + s2)
    return AnalyticMses(
        mmse=mmse,
        posterior_sampler_mse=2.0 * mmse,
        x0_mse=2.0 * (1.0 - 1.0 / np.sqrt(1.0 + s2)),
    )


def sample_joint(model: ScalarNoiseModel, n: int, key: RngKey):
    """Draw n pairs (x, y) from the joint model."""
    g = key.generator()
    x = g.standard_normal(n)
    y = x + model.sigma_n * g.standard_normal(n)
    return x, y


def monte_carlo_mse(
    estimator: Callable,
    model: ScalarNoiseModel,
    n: int,
    key: RngKey,
    sampler: bool = False,
    chunk: int = 1_000_000,
) -> float:
    """Empirical MSE of ``estimator`` over n joint draws.

    A deterministic estimator is called as ``estimator(y)``. With
    ``sampler=True`` it is called as ``estimator(y, key)`` and may randomize.
    Work is chunked so n = 10**7 stays within a modest memory budget.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0.0
    done = 0
    i = 0
    while done < n:
        m = min(chunk, n - done)
        x, y = sample_joint(model, m, key.child("joint", i))
        xhat = estimator(y, key.child("sampler", i)) if sampler else estimator(y)
        total += float(np.sum((np.asarray(xhat) - x) ** 2))
        done += m
        i += 1
    return total / n
