"""Deterministic sampling and symmetric-matrix routines.

Tensors throughout the package are plain ``numpy.ndarray`` values of dtype
float64 (row-major). Every stochastic operation takes an explicit
:class:`RngKey`; the key drives numpy's Philox counter-based generator, so
``(seed, stream)`` fully determines the sample sequence.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import NonSymmetric, Singular

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngKey:
    seed: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def generator(self) -> np.random.Generator:
        bitgen = np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        return np.random.Generator(bitgen)

    def child(self, *labels) -> "RngKey":
        """Derive an independent key for a named sub-task.

        Labels may be ints or strings; the derivation is a keyed hash, so it
        is stable across processes and platforms.
        """
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<QQ", self.seed, self.stream))
        for label in labels:
            h.update(repr(label).encode("utf-8"))
            h.update(b"\x00")
        return RngKey(self.seed, int.from_bytes(h.digest(), "little"))


def as_key(key) -> RngKey:
    if isinstance(key, RngKey):
        return key
    return RngKey(int(key))


def sample_standard_normal(key: RngKey, shape) -> np.ndarray:
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if any(s < 1 for s in shape):
        raise ValueError(f"extents must be positive, got {shape}")
    return key.generator().standard_normal(shape)


def sample_uniform(key: RngKey, shape, low=0.0, high=1.0) -> np.ndarray:
    return key.generator().uniform(low, high, size=shape)


def _check_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    if scale > 0 and np.max(np.abs(m - m.T)) > 1e-9 * scale:
        raise NonSymmetric("matrix is not symmetric within 1e-9 * max|entry|")
    return 0.5 * (m + m.T)


def matrix_sqrt_psd(m) -> np.ndarray:
    """Symmetric square root of a PSD matrix; negative eigenvalues clamp to 0."""
    m = _check_symmetric(m)
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


def matrix_inv_sqrt_pd(m, rtol: float = 1e-13) -> np.ndarray:
    """Inverse symmetric square root of a positive definite matrix."""
    m = _check_symmetric(m)
    w, v = np.linalg.eigh(m)
    if w.size and (w.min() <= 0 or w.min() <= rtol * w.max()):
        raise Singular(f"matrix is not positive definite (min eigenvalue {w.min():.3e})")
    s = (v / np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)
