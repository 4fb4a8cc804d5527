"""Distortion and perceptual-index measurements."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dot_baseline import GaussianStats, fit_gaussian
from .errors import ShapeMismatch
from .tensor_core import matrix_sqrt_psd


@dataclass
class DistortionReport:
    mse: float
    rmse: float
    psnr: float  # math.inf when mse == 0
    ind_rmse: float | None
    n: int

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "rmse": self.rmse,
            "psnr": "inf" if math.isinf(self.psnr) else self.psnr,
            "ind_rmse": self.ind_rmse,
            "n": self.n,
        }


def _pair_rows(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ShapeMismatch("no pairs given")
    return a.reshape(a.shape[0], -1), b.reshape(b.shape[0], -1)


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    return math.inf if mse == 0 else 10.0 * math.log10(peak * peak / mse)


def mse_rmse_psnr(xs, xhats, mmse_preds=None) -> DistortionReport:
    """Per-pair component-mean squared error averaged over pairs (peak 1.0)."""
    a, b = _pair_rows(xs, xhats)
    mse = float(np.mean(np.mean((a - b) ** 2, axis=1)))
    ind = indrmse(xhats, mmse_preds) if mmse_preds is not None else None
    return DistortionReport(mse, math.sqrt(mse), psnr_from_mse(mse), ind, a.shape[0])


def indrmse(recons, mmse_preds) -> float:
    """RMSE against the posterior-mean predictor's outputs; needs no ground truth."""
    a, b = _pair_rows(recons, mmse_preds)
    return math.sqrt(float(np.mean(np.mean((a - b) ** 2, axis=1))))


def frechet_gaussian(a: GaussianStats, b: GaussianStats) -> float:
    """2-Wasserstein distance between N(mean_a, cov_a) and N(mean_b, cov_b).

    Uses d^2 = |mu_a - mu_b|^2 + min_U |S_a - S_b U|_F^2 over orthogonal U,
    with S the symmetric square roots. The minimiser comes from the SVD of
    S_a^T S_b, and the residual form avoids the cancellation in
    tr(A) + tr(B) - 2 tr((A^1/2 B A^1/2)^1/2) when the two laws are close.
    """
    diff = a.mean - b.mean
    sa = matrix_sqrt_psd(a.cov)
    sb = matrix_sqrt_psd(b.cov)
    p, _, qt = np.linalg.svd(sa.T @ sb)
    resid = sa - sb @ (qt.T @ p.T)
    d2 = float(diff @ diff + np.sum(resid * resid))
    return math.sqrt(max(d2, 0.0))


def pool_images(rows, image_shape, pool: int) -> np.ndarray:
    """Average-pool flattened HxWxC rows by ``pool`` in each spatial direction."""
    rows = np.asarray(rows, dtype=np.float64)
    if pool <= 1 or image_shape is None:
        return rows.reshape(rows.shape[0], -1)
    h, w, c = image_shape
    hh, ww = h // pool, w // pool
    imgs = rows.reshape(-1, h, w, c)[:, : hh * pool, : ww * pool, :]
    return imgs.reshape(-1, hh, pool, ww, pool, c).mean(axis=(2, 4)).reshape(rows.shape[0], -1)


def frechet_from_samples(a, b) -> float:
    return frechet_gaussian(fit_gaussian(a), fit_gaussian(b))
