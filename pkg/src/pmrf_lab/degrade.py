"""Forward degradation operators.

Images are HxWxC float64 arrays (a 2-D HxW array is treated as one channel).
The blind pipeline is blur -> bilinear down -> white noise -> bilinear up to
the original size; JPEG compression is not modelled.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import BadChannels, BadKernel, DegenerateSize
from .tensor_core import RngKey

log = logging.getLogger(__name__)

KINDS = ("pipeline", "denoise", "super_resolution", "inpaint", "colorize")


@dataclass
class DegradationSpec:
    kind: str = "denoise"
    blur_sigma: float = 0.0
    blur_ksize: int = 41
    downsample_factor: float = 1.0
    noise_sigma: float = 0.0
    mask_fraction: float = 0.0
    sr_factor: int = 1
    sigma_range: tuple = (0.1, 15.0)
    r_range: tuple = (0.8, 32.0)
    delta_range: tuple = (0.0, 20.0 / 255.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if self.blur_ksize < 1 or self.blur_ksize % 2 == 0:
            raise BadKernel(f"blur_ksize must be odd and positive, got {self.blur_ksize}")
        for name in ("sigma_range", "r_range", "delta_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
            setattr(self, name, (float(lo), float(hi)))
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in [0, 1]")
        if self.sr_factor < 1:
            raise ValueError("sr_factor must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("sigma_range", "r_range", "delta_range"):
            d[name] = list(d[name])
        return d


def _as_hwc(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[:, :, None], True
    if img.ndim != 3:
        raise ValueError(f"expected HxW or HxWxC image, got shape {img.shape}")
    return img, False


def gaussian_kernel_1d(sigma: float, ksize: int) -> np.ndarray:
    if ksize < 1 or ksize % 2 == 0:
        raise BadKernel(f"kernel size must be odd and positive, got {ksize}")
    if sigma <= 0:
        k = np.zeros(ksize)
        k[ksize // 2] = 1.0
        return k
    r = ksize // 2
    i = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(i * i) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = kernel.size // 2
    pad = [(0, 0)] * img.ndim
    pad[axis] = (r, r)
    # half-sample symmetric reflection: ... c b a | a b c ...
    padded = np.pad(img, pad, mode="symmetric")
    n = img.shape[axis]
    out = np.zeros_like(img)
    for j, w in enumerate(kernel):
        out += w * np.take(padded, np.arange(j, j + n), axis=axis)
    return out


def gaussian_blur(img, sigma: float, ksize: int) -> np.ndarray:
    if ksize < 1 or ksize % 2 == 0:
        raise BadKernel(f"kernel size must be odd and positive, got {ksize}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x, squeezed = _as_hwc(img)
    if sigma == 0:
        out = x.copy()
    else:
        k = gaussian_kernel_1d(sigma, ksize)
        out = _convolve_axis(_convolve_axis(x, k, 0), k, 1)
    return out[:, :, 0] if squeezed else out


def _bilinear_axis(x: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = x.shape[axis]
    if out_len == in_len:
        return x.copy()
    scale = in_len / out_len
    src = (np.arange(out_len) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_len - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, in_len - 1)
    w = src - i0
    shape = [1] * x.ndim
    shape[axis] = out_len
    w = w.reshape(shape)
    return np.take(x, i0, axis=axis) * (1.0 - w) + np.take(x, i1, axis=axis) * w


def resample(img, factor: float = 1.0, direction: str = "down", size=None) -> np.ndarray:
    """Bilinear resize (half-pixel centres, no corner alignment, no antialias).

    ``size=(H, W)`` overrides ``factor``; otherwise the output extents are
    ``floor(H / factor)`` when downsampling and ``round(H * factor)`` when
    upsampling.
    """
    x, squeezed = _as_hwc(img)
    h, w = x.shape[:2]
    if size is None:
        if factor < 1:
            raise ValueError(f"factor must be >= 1, got {factor}")
        if direction == "down":
            size = (int(math.floor(h / factor)), int(math.floor(w / factor)))
        elif direction == "up":
            size = (int(round(h * factor)), int(round(w * factor)))
        else:
            raise ValueError(f"direction must be 'down' or 'up', got {direction!r}")
    oh, ow = int(size[0]), int(size[1])
    if oh < 1 or ow < 1:
        raise DegenerateSize(f"resampling {h}x{w} by {factor} gives {oh}x{ow}")
    out = _bilinear_axis(_bilinear_axis(x, oh, 0), ow, 1)
    return out[:, :, 0] if squeezed else out


def upscale_nearest(img, size) -> np.ndarray:
    x, squeezed = _as_hwc(img)
    h, w = x.shape[:2]
    rows = np.minimum((np.arange(size[0]) * h) // size[0], h - 1)
    cols = np.minimum((np.arange(size[1]) * w) // size[1], w - 1)
    out = x[rows][:, cols]
    return out[:, :, 0] if squeezed else out


def add_noise(img, delta: float, key: RngKey) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return img.copy()
    return img + delta * key.generator().standard_normal(img.shape)


def mask_pixels(img, fraction: float, key: RngKey):
    """Zero a uniformly chosen set of round(fraction*H*W) pixel positions.

    Returns ``(masked, mask)`` where mask is 1 on kept pixels and 0 on masked
    ones, broadcast over channels.
    """
    x, squeezed = _as_hwc(img)
    h, w, _ = x.shape
    count = int(math.floor(fraction * h * w + 0.5))
    flat = np.ones(h * w)
    if count:
        idx = key.generator().permutation(h * w)[:count]
        flat[idx] = 0.0
    mask = np.repeat(flat.reshape(h, w, 1), x.shape[2], axis=2)
    out = x * mask
    if squeezed:
        return out[:, :, 0], mask[:, :, 0]
    return out, mask


def desaturate(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise BadChannels(f"expected 3 channels, got shape {img.shape}")
    gray = img.mean(axis=2, keepdims=True)
    return np.repeat(gray, 3, axis=2)


def effective_ksize(ksize: int, h: int, w: int) -> int:
    """Largest odd kernel size <= ksize that fits inside the image."""
    m = min(h, w)
    m = m if m % 2 == 1 else m - 1
    return max(1, min(ksize, m))


def sample_pipeline_params(spec: DegradationSpec, key: RngKey):
    u = key.generator().uniform(size=3)
    sigma = spec.sigma_range[0] + u[0] * (spec.sigma_range[1] - spec.sigma_range[0])
    r = spec.r_range[0] + u[1] * (spec.r_range[1] - spec.r_range[0])
    delta = spec.delta_range[0] + u[2] * (spec.delta_range[1] - spec.delta_range[0])
    return float(sigma), float(r), float(delta)


def apply_pipeline(img, spec: DegradationSpec, key: RngKey) -> np.ndarray:
    if spec.kind != "pipeline":
        raise ValueError(f"apply_pipeline needs kind='pipeline', got {spec.kind!r}")
    x, squeezed = _as_hwc(img)
    h, w = x.shape[:2]
    sigma, r, delta = sample_pipeline_params(spec, key.child("params"))
    if r < 1.0:
        log.debug("downsample factor %.3f < 1 treated as identity", r)
        r = 1.0
    out = gaussian_blur(x, sigma, effective_ksize(spec.blur_ksize, h, w))
    small = (max(1, int(math.floor(h / r))), max(1, int(math.floor(w / r))))
    out = resample(out, size=small)
    out = add_noise(out, delta, key.child("noise"))
    out = resample(out, size=(h, w))
    return out[:, :, 0] if squeezed else out


def degrade(img, spec: DegradationSpec, key: RngKey) -> np.ndarray:
    """Apply the degradation named by ``spec.kind`` to one image."""
    noise_key = key.child("noise")
    if spec.kind == "pipeline":
        return apply_pipeline(img, spec, key)
    if spec.kind == "denoise":
        return add_noise(img, spec.noise_sigma, noise_key)
    if spec.kind == "super_resolution":
        small = resample(img, spec.sr_factor, "down")
        return add_noise(small, spec.noise_sigma, noise_key)
    if spec.kind == "inpaint":
        masked, _ = mask_pixels(img, spec.mask_fraction, key.child("mask"))
        return add_noise(masked, spec.noise_sigma, noise_key)
    if spec.kind == "colorize":
        return add_noise(desaturate(img), spec.noise_sigma, noise_key)
    raise ValueError(f"unknown degradation kind {spec.kind!r}")
