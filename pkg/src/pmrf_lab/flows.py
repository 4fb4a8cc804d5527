"""Rectified-flow frameworks for restoration.

Four methods share one straight-line forward process ``z_t = t z1 + (1-t) z0``
with ``z1 = x`` and differ in the source ``z0`` and the conditioning input:

=============  ===========================  ==============
method         z0                           cond
=============  ===========================  ==============
pmrf           fstar(y) + sigma_s * eps     none
cond_on_y      eps                          y
cond_on_xstar  eps                          fstar(y)
flow_from_y    y_dagger + sigma_s * eps     none
=============  ===========================  ==============

All arrays are batches of flattened samples, shape (n, d).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFinite, ShapeMismatch
from .neural import MlpParams, TrainConfig, forward, loss_and_grad, mlp_init, train_regression
from .tensor_core import RngKey

METHODS = ("pmrf", "cond_on_y", "cond_on_xstar", "flow_from_y")
CONDITIONAL = ("cond_on_y", "cond_on_xstar")


@dataclass(frozen=True)
class FlowSpec:
    method: str = "pmrf"
    sigma_s: float = 0.025
    steps_k: int = 100

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown flow method {self.method!r}")
        if self.sigma_s < 0:
            raise ValueError("sigma_s must be non-negative")
        if self.steps_k < 1:
            raise ValueError("steps_k must be >= 1")


@dataclass
class Coupling:
    z0: np.ndarray
    z1: np.ndarray
    cond: np.ndarray | None = None

    def __post_init__(self):
        if self.z0.shape != self.z1.shape:
            raise ShapeMismatch(f"z0 {self.z0.shape} and z1 {self.z1.shape} differ")


def _stratify(perm, u) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.float64)
    return (perm + np.asarray(u, dtype=np.float64)) / perm.size


def sample_t_stratified(batch_size: int, key: RngKey) -> np.ndarray:
    """One uniform draw per stratum [i/B, (i+1)/B), strata assigned by a random permutation."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    g = key.generator()
    perm = g.permutation(batch_size)
    u = g.uniform(size=batch_size)
    return _stratify(perm, u)


def _rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(a.shape[0], -1) if a.ndim != 2 else a


def make_coupling(method: str, x, y, xstar, sigma_s: float, key: RngKey) -> Coupling:
    """Build (z0, z1, cond) for a batch. For flow_from_y, ``y`` must already be x-shaped."""
    x = _rows(x)
    if method not in METHODS:
        raise ValueError(f"unknown flow method {method!r}")
    if method in ("pmrf", "cond_on_xstar"):
        xstar = _rows(xstar)
        if xstar.shape != x.shape:
            raise ShapeMismatch(f"xstar {xstar.shape} does not match x {x.shape}")
    eps = key.generator().standard_normal(x.shape)
    if method == "pmrf":
        z0 = xstar + sigma_s * eps if sigma_s else xstar.copy()
        return Coupling(z0, x)
    if method == "flow_from_y":
        y = _rows(y)
        if y.shape != x.shape:
            raise ShapeMismatch(f"flow_from_y needs x-shaped y, got {y.shape} vs {x.shape}")
        z0 = y + sigma_s * eps if sigma_s else y.copy()
        return Coupling(z0, x)
    cond = _rows(y) if method == "cond_on_y" else xstar
    return Coupling(eps, x, cond)


def as_field(v) -> Callable:
    """Turn network params into a field ``v(z, t, cond)``; callables pass through."""
    if isinstance(v, MlpParams):
        return lambda z, t, cond=None: forward(v, z, np.full(z.shape[0], t), cond)
    return v


def rf_training_step(vparams: MlpParams, coupling: Coupling, t):
    """Loss and gradients of the straight-path regression on one batch."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    zt = t * coupling.z1 + (1.0 - t) * coupling.z0
    target = coupling.z1 - coupling.z0
    return loss_and_grad(vparams, zt, t[:, 0], coupling.cond, target)


def euler_integrate(vfield, z0, K: int, cond=None) -> np.ndarray:
    """K explicit Euler steps at times i/K, i = 0..K-1."""
    if K < 1:
        raise ValueError("K must be >= 1")
    v = as_field(vfield)
    z = np.array(z0, dtype=np.float64, copy=True)
    h = 1.0 / K
    for i in range(K):
        z = z + h * v(z, i / K, cond)
        if not np.all(np.isfinite(z)):
            raise NonFinite(f"non-finite state after Euler step {i + 1}/{K}")
    return z


def pmrf_restore(fstar, vparams, y, spec: FlowSpec, key: RngKey) -> np.ndarray:
    """Posterior-mean prediction plus sigma_s noise, then the learned flow."""
    if spec.method != "pmrf":
        raise ValueError("pmrf_restore needs a pmrf FlowSpec")
    xhat = _rows(fstar(y))
    if spec.sigma_s:
        xhat = xhat + spec.sigma_s * key.generator().standard_normal(xhat.shape)
    return euler_integrate(vparams, xhat, spec.steps_k)


def baseline_restore(method: str, vparams, inputs, spec: FlowSpec, key: RngKey, out_shape=None) -> np.ndarray:
    """Inference for the baseline flows.

    ``inputs`` is y for cond_on_y, fstar(y) for cond_on_xstar and the
    up-scaled y_dagger for flow_from_y. ``out_shape`` is the (n, d) shape of
    the restoration when it differs from ``inputs`` (cond_on_y with a
    low-resolution y).
    """
    if method == "pmrf" or method not in METHODS:
        raise ValueError(f"baseline_restore does not handle {method!r}")
    inputs = _rows(inputs)
    shape = tuple(out_shape) if out_shape is not None else inputs.shape
    eps = key.generator().standard_normal(shape)
    if method == "flow_from_y":
        z0 = inputs + spec.sigma_s * eps if spec.sigma_s else inputs.copy()
        return euler_integrate(vparams, z0, spec.steps_k)
    return euler_integrate(vparams, eps, spec.steps_k, cond=inputs)


def _batch_eval(fn, a, chunk=4096):
    a = _rows(a)
    return np.concatenate([_rows(fn(a[i : i + chunk])) for i in range(0, a.shape[0], chunk)], axis=0)


def mmse_predictor(fparams: MlpParams) -> Callable:
    return lambda y: _batch_eval(lambda b: forward(fparams, b), y)


def train_mmse(config: TrainConfig, xs, ys, key: RngKey) -> MlpParams:
    """Fit f(y) ~ E[x | y] by squared-error regression; returns EMA weights."""
    xs, ys = _rows(xs), _rows(ys)
    if xs.shape[0] == 0:
        raise ValueError("empty dataset")
    sizes = [ys.shape[1], *config.hidden, xs.shape[1]]
    params = mlp_init(sizes, 0, key.child("init"), n_freqs=0)

    def make_batch(idx, _key):
        return ys[idx], None, None, xs[idx]

    return train_regression(params, config, xs.shape[0], make_batch, key.child("train"))


def _flow_net(config: TrainConfig, d: int, cond_width: int, key: RngKey) -> MlpParams:
    return mlp_init([d, *config.hidden, d], cond_width, key, n_freqs=config.n_freqs)


def train_flow(config: TrainConfig, xs, ys, fstar, spec: FlowSpec, key: RngKey, y_dagger=None) -> MlpParams:
    """Train the vector field for ``spec.method``; returns EMA weights.

    ``fstar`` (a callable) is required for pmrf and cond_on_xstar;
    ``y_dagger`` (x-shaped measurements) replaces ``ys`` for flow_from_y and
    defaults to ``ys``. Fresh source noise and stratified times are drawn for
    every batch.
    """
    xs, ys = _rows(xs), _rows(ys)
    method = spec.method
    xstar = None
    if method in ("pmrf", "cond_on_xstar"):
        if fstar is None:
            raise ValueError(f"{method} needs a posterior-mean predictor")
        xstar = _rows(fstar(ys))
    ysrc = _rows(y_dagger) if (method == "flow_from_y" and y_dagger is not None) else ys
    cond_width = 0
    if method == "cond_on_y":
        cond_width = ys.shape[1]
    elif method == "cond_on_xstar":
        cond_width = xs.shape[1]
    params = _flow_net(config, xs.shape[1], cond_width, key.child("init"))

    def make_batch(idx, bkey):
        c = make_coupling(
            method, xs[idx], ysrc[idx], None if xstar is None else xstar[idx], spec.sigma_s, bkey.child("eps")
        )
        t = sample_t_stratified(len(idx), bkey.child("t")).reshape(-1, 1)
        zt = t * c.z1 + (1.0 - t) * c.z0
        return zt, t[:, 0], c.cond, c.z1 - c.z0

    return train_regression(params, config, xs.shape[0], make_batch, key.child("train"))


def train_on_couplings(config: TrainConfig, z0, z1, cond, key: RngKey) -> MlpParams:
    """Train a field on a fixed set of (z0, z1[, cond]) pairs."""
    z0, z1 = _rows(z0), _rows(z1)
    cond = None if cond is None else _rows(cond)
    params = _flow_net(config, z0.shape[1], 0 if cond is None else cond.shape[1], key.child("init"))

    def make_batch(idx, bkey):
        t = sample_t_stratified(len(idx), bkey.child("t")).reshape(-1, 1)
        zt = t * z1[idx] + (1.0 - t) * z0[idx]
        return zt, t[:, 0], None if cond is None else cond[idx], z1[idx] - z0[idx]

    return train_regression(params, config, z0.shape[0], make_batch, key.child("train"))


def reflow(config: TrainConfig, xs, ys, fstar, spec: FlowSpec, prev_vparams, key: RngKey, y_dagger=None):
    """One reflow round.

    Source samples z0 are drawn once per training pair exactly as in
    ``make_coupling``; the previous field maps each to an endpoint
    ``zhat1 = euler(prev, z0, K)``, and a new field is trained on the fixed
    ``(z0, zhat1)`` pairs. Returns ``(new_params, z0, zhat1, cond)`` so callers
    can compare transport costs.
    """
    xs, ys = _rows(xs), _rows(ys)
    xstar = None if fstar is None else _rows(fstar(ys))
    ysrc = _rows(y_dagger) if (spec.method == "flow_from_y" and y_dagger is not None) else ys
    c = make_coupling(spec.method, xs, ysrc, xstar, spec.sigma_s, key.child("source"))
    zhat1 = euler_integrate(prev_vparams, c.z0, spec.steps_k, c.cond)
    new = train_on_couplings(config, c.z0, zhat1, c.cond, key.child("reflow"))
    return new, c.z0, zhat1, c.cond


def transport_cost(z0, z1) -> float:
    """E||z1 - z0||^2 averaged over samples (summed over components)."""
    d = _rows(z1) - _rows(z0)
    return float(np.mean(np.sum(d * d, axis=1)))
