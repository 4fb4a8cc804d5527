"""Toy datasets and IDX ingestion."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, Truncated
from ..tensor_core import RngKey

SPRITE_SIZE = 16
IDX_U8_3D = 0x00000803


def _sprite(g: np.random.Generator, size: int = SPRITE_SIZE) -> np.ndarray:
    img = np.empty((size, size, 3))
    img[:] = g.uniform(0.05, 0.45, size=3)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    for _ in range(g.integers(1, 4)):
        color = g.uniform(0.0, 1.0, size=3)
        color[g.integers(3)] = g.uniform(0.7, 1.0)
        cy, cx = g.uniform(3, size - 3, size=2)
        r = g.uniform(2.0, 5.0)
        kind = g.integers(3)
        if kind == 0:
            inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        elif kind == 1:
            inside = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r * g.uniform(0.5, 1.0))
        else:
            inside = (yy - cy + r >= 0) & (yy - cy <= r) & (np.abs(xx - cx) <= (yy - cy + r) / 2)
        img[inside] = color
    return img


def two_moons(n: int, key: RngKey, noise: float = 0.1) -> np.ndarray:
    g = key.generator()
    upper = g.random(n) < 0.5
    theta = g.uniform(0, np.pi, size=n)
    x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
    y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
    pts = np.stack([x, y], axis=1) + noise * g.standard_normal((n, 2))
    return pts


def synth_dataset(kind: str, n: int, key: RngKey) -> np.ndarray:
    """Deterministic toy data, returned as one stacked array.

    sprites: (n, 16, 16, 3) procedurally drawn shapes in [0, 1];
    two_moons_2d: (n, 2); gauss1d: (n, 1) standard normal scalars.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind == "sprites" or kind == "synthetic_sprites":
        return np.stack([_sprite(key.child("sprite", i).generator()) for i in range(n)])
    if kind == "two_moons_2d":
        return two_moons(n, key)
    if kind == "gauss1d":
        return key.generator().standard_normal((n, 1))
    raise ValueError(f"unknown dataset kind {kind!r}")


def write_idx(path, images) -> None:
    """Write (n, H, W) or (n, H, W, 1) values in [0, 1] as an unsigned-byte IDX file."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 4 and arr.shape[3] == 1:
        arr = arr[..., 0]
    if arr.ndim != 3:
        raise ValueError(f"expected (n, H, W) images, got {arr.shape}")
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    header = struct.pack(">I3I", IDX_U8_3D, *arr.shape)
    Path(path).write_bytes(header + u8.tobytes())


def load_idx(path) -> np.ndarray:
    """Read an unsigned-byte 3-D IDX file into (n, H, W, 1) floats in [0, 1]."""
    buf = Path(path).read_bytes()
    if len(buf) < 4:
        raise Truncated(f"{path}: missing header")
    (magic,) = struct.unpack(">I", buf[:4])
    if magic != IDX_U8_3D:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_U8_3D:08x}")
    if len(buf) < 16:
        raise Truncated(f"{path}: truncated header")
    n, h, w = struct.unpack(">3I", buf[4:16])
    need = 16 + n * h * w
    if len(buf) < need:
        raise Truncated(f"{path}: expected {need} bytes, got {len(buf)}")
    data = np.frombuffer(buf[16:need], dtype=np.uint8).reshape(n, h, w, 1)
    return data.astype(np.float64) / 255.0
