"""Closed-form Gaussian optimal transport applied to posterior-mean outputs.

The source law is fitted on posterior-mean predictions, the target on clean
samples; restoration pushes ``fstar(y)`` through the resulting affine map.
Large images are handled in a pooled grayscale space (see :class:`Projection`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, TooFewSamples
from .tensor_core import matrix_inv_sqrt_pd, matrix_sqrt_psd

MAX_DIM = 4096


@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int


@dataclass
class Projection:
    """Average-pool to grayscale; the lifted residual is carried unchanged."""

    image_shape: tuple  # (H, W, C)
    pool: int

    @property
    def dim(self) -> int:
        h, w, _ = self.image_shape
        return (h // self.pool) * (w // self.pool)

    def down(self, rows: np.ndarray) -> np.ndarray:
        h, w, c = self.image_shape
        p = self.pool
        hh, ww = h // p, w // p
        imgs = rows.reshape(-1, h, w, c)[:, : hh * p, : ww * p, :]
        gray = imgs.mean(axis=3)
        return gray.reshape(-1, hh, p, ww, p).mean(axis=(2, 4)).reshape(-1, hh * ww)

    def up(self, low: np.ndarray) -> np.ndarray:
        h, w, c = self.image_shape
        p = self.pool
        hh, ww = h // p, w // p
        blocks = low.reshape(-1, hh, 1, ww, 1)
        full = np.zeros((low.shape[0], h, w))
        full[:, : hh * p, : ww * p] = np.broadcast_to(blocks, (low.shape[0], hh, p, ww, p)).reshape(-1, hh * p, ww * p)
        return np.repeat(full[..., None], c, axis=3).reshape(low.shape[0], -1)


@dataclass
class AffineMap:
    matrix: np.ndarray
    offset: np.ndarray
    projection: Projection | None = None

    def apply(self, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        flat = rows.reshape(rows.shape[0], -1)
        if self.projection is None:
            if flat.shape[1] != self.offset.size:
                raise ShapeMismatch(f"map dimension {self.offset.size} != input dimension {flat.shape[1]}")
            return flat @ self.matrix.T + self.offset
        low = self.projection.down(flat)
        moved = low @ self.matrix.T + self.offset
        return flat + self.projection.up(moved - low)

    def to_dict(self) -> dict:
        d = {"matrix": self.matrix.tolist(), "offset": self.offset.tolist()}
        if self.projection is not None:
            d["projection"] = {"image_shape": list(self.projection.image_shape), "pool": self.projection.pool}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AffineMap":
        proj = None
        if "projection" in d:
            proj = Projection(tuple(d["projection"]["image_shape"]), int(d["projection"]["pool"]))
        return cls(np.asarray(d["matrix"], dtype=np.float64), np.asarray(d["offset"], dtype=np.float64), proj)


def fit_gaussian(samples) -> GaussianStats:
    """Sample mean and unbiased covariance, ridge-regularized by 1e-6 * trace/d."""
    x = np.asarray(samples, dtype=np.float64)
    x = x.reshape(x.shape[0], -1) if x.ndim != 2 else x
    n, d = x.shape
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    cov = 0.5 * (cov + cov.T)
    lam = max(1e-6 * np.trace(cov) / d, 1e-12)
    cov[np.diag_indices(d)] += lam
    return GaussianStats(mean, cov, n)


def gaussian_ot_map(src: GaussianStats, tgt: GaussianStats) -> AffineMap:
    s_half = matrix_sqrt_psd(src.cov)
    s_inv_half = matrix_inv_sqrt_pd(src.cov)
    middle = matrix_sqrt_psd(s_half @ tgt.cov @ s_half)
    a = s_inv_half @ middle @ s_inv_half
    a = 0.5 * (a + a.T)
    return AffineMap(a, tgt.mean - a @ src.mean)


def choose_projection(image_shape, max_dim: int = MAX_DIM) -> Projection | None:
    """None when the flattened image fits in ``max_dim``; otherwise the smallest pooling that does."""
    if image_shape is None or int(np.prod(image_shape)) <= max_dim:
        return None
    h, w = image_shape[:2]
    c = image_shape[2] if len(image_shape) > 2 else 1
    pool = 1
    while (h // pool) * (w // pool) > max_dim or (h // pool) > 64 or (w // pool) > 64:
        pool += 1
    return Projection((h, w, c), pool)


def fit_dot(source_samples, target_samples, image_shape=None, max_dim: int = MAX_DIM) -> AffineMap:
    """Fit the transport map from posterior-mean outputs to clean samples."""
    src = np.asarray(source_samples, dtype=np.float64)
    tgt = np.asarray(target_samples, dtype=np.float64)
    src = src.reshape(src.shape[0], -1)
    tgt = tgt.reshape(tgt.shape[0], -1)
    proj = choose_projection(image_shape, max_dim)
    if proj is not None:
        src, tgt = proj.down(src), proj.down(tgt)
    m = gaussian_ot_map(fit_gaussian(src), fit_gaussian(tgt))
    m.projection = proj
    return m


def dot_restore(fstar, amap: AffineMap, y) -> np.ndarray:
    xstar = np.asarray(fstar(y), dtype=np.float64)
    out = amap.apply(xstar.reshape(xstar.shape[0], -1))
    return out.reshape(xstar.shape)
