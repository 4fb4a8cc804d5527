"""Small fully-connected network with exact backpropagation.

The network is the desk-scale stand-in for both the posterior-mean regressor
and the flow vector field. Its input row is ``[x, time features, cond]``;
time features are ``sin(f t), cos(f t)`` over a geometric frequency table.
Hidden layers use SiLU, the output layer is linear.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BadMagic, BadShape, Truncated
from .tensor_core import RngKey

MAGIC = b"PMRFMLP\x00"
VERSION = 1


@dataclass
class MlpParams:
    weights: list  # each (fan_out, fan_in)
    biases: list  # each (fan_out,)
    freqs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cond_width: int = 0

    @property
    def n_freqs(self) -> int:
        return int(self.freqs.size)

    @property
    def in_width(self) -> int:
        return self.weights[0].shape[1] - 2 * self.n_freqs - self.cond_width

    @property
    def out_width(self) -> int:
        return self.weights[-1].shape[0]

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_arrays(self, arrays) -> "MlpParams":
        arrays = list(arrays)
        return replace(self, weights=arrays[0::2], biases=arrays[1::2])

    def copy(self) -> "MlpParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "MlpParams":
        return self.with_arrays([np.zeros_like(a) for a in self.arrays()])


def default_freqs(n: int) -> np.ndarray:
    if n == 0:
        return np.zeros(0)
    return np.geomspace(0.5, 16.0 * np.pi, n)


def mlp_init(layer_sizes, cond_width: int = 0, key: RngKey | None = None, n_freqs: int = 0) -> MlpParams:
    """Random network; ``layer_sizes[0]`` is the data width, excluding time and cond inputs."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise BadShape(f"need >= 2 positive layer sizes, got {layer_sizes}")
    key = key if key is not None else RngKey(0)
    fan0 = sizes[0] + 2 * n_freqs + cond_width
    fans = [fan0] + sizes[1:]
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(fans[:-1], fans[1:])):
        g = key.child("layer", i).generator()
        weights.append(g.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, default_freqs(n_freqs), int(cond_width))


def _silu(a):
    s = 1.0 / (1.0 + np.exp(-a))
    return a * s, s


def _input_row(params: MlpParams, x, t, cond):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if params.in_width == 1 and x.shape[0] != 1 else x[None, :]
    if x.shape[1] != params.in_width:
        raise BadShape(f"input width {x.shape[1]} != network data width {params.in_width}")
    parts = [x]
    n = x.shape[0]
    if params.n_freqs:
        if t is None:
            raise BadShape("network expects a time input")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (n,))
        ang = t[:, None] * params.freqs[None, :]
        parts.extend((np.sin(ang), np.cos(ang)))
    if params.cond_width:
        if cond is None:
            raise BadShape("network expects a conditioning input")
        cond = np.asarray(cond, dtype=np.float64).reshape(n, -1)
        if cond.shape[1] != params.cond_width:
            raise BadShape(f"cond width {cond.shape[1]} != {params.cond_width}")
        parts.append(cond)
    return np.concatenate(parts, axis=1) if len(parts) > 1 else x


def _forward_cache(params: MlpParams, x, t, cond):
    h = _input_row(params, x, t, cond)
    acts = [h]
    sigs = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w.T + b
        if i < last:
            h, s = _silu(a)
            acts.append(h)
            sigs.append((a, s))
        else:
            h = a
    return h, acts, sigs


def forward(params: MlpParams, x, t=None, cond=None) -> np.ndarray:
    """Evaluate the network on a batch of rows (n, in_width)."""
    return _forward_cache(params, x, t, cond)[0]


def loss_and_grad(params: MlpParams, x, t, cond, target):
    """Mean squared error over batch and components, with exact gradients."""
    out, acts, sigs = _forward_cache(params, x, t, cond)
    target = np.asarray(target, dtype=np.float64).reshape(out.shape)
    if out.shape[0] == 0:
        raise BadShape("empty batch")
    resid = out - target
    loss = float(np.mean(resid * resid))
    delta = 2.0 * resid / resid.size
    gw, gb = [None] * len(params.weights), [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            a, s = sigs[i - 1]
            delta = (delta @ params.weights[i]) * (s + a * s * (1.0 - s))
    return loss, replace(params, weights=gw, biases=gb)


@dataclass
class OptimState:
    m: list
    v: list
    step: int = 0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 1e-2


def adamw_init(params: MlpParams, lr=5e-4, betas=(0.9, 0.95), eps=1e-8, weight_decay=1e-2) -> OptimState:
    zeros = [np.zeros_like(a) for a in params.arrays()]
    return OptimState(zeros, [z.copy() for z in zeros], 0, lr, betas[0], betas[1], eps, weight_decay)


def adamw_step(state: OptimState, params: MlpParams, grads: MlpParams):
    """One decoupled-weight-decay Adam update; returns new (params, state)."""
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        p = p * (1.0 - state.lr * state.weight_decay)
        p = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_p.append(p)
        new_m.append(m)
        new_v.append(v)
    return params.with_arrays(new_p), replace(state, m=new_m, v=new_v, step=step)


@dataclass
class EmaParams:
    shadow: MlpParams
    decay: float = 0.9999


def ema_update(ema: EmaParams, params: MlpParams, decay: float | None = None) -> EmaParams:
    d = ema.decay if decay is None else decay
    arrays = [d * s + (1.0 - d) * p for s, p in zip(ema.shadow.arrays(), params.arrays())]
    return EmaParams(ema.shadow.with_arrays(arrays), ema.decay)


def ema_warmup_decay(decay: float, step: int) -> float:
    """Decay actually applied after ``step`` updates: ramps up so early shadows are not pinned to init."""
    return min(decay, (1.0 + step) / (10.0 + step))


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 256
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 1e-2
    ema_decay: float = 0.9999
    hidden: tuple = (256, 256)
    n_freqs: int = 16


def train_regression(params: MlpParams, cfg: TrainConfig, n: int, make_batch, key: RngKey) -> MlpParams:
    """Generic minibatch AdamW loop with EMA tracking; returns the EMA weights.

    ``make_batch(idx, key)`` returns ``(x, t, cond, target)`` for the sample
    indices ``idx``. Each epoch visits a fresh permutation of ``range(n)``.
    """
    state = adamw_init(params, cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps, cfg.weight_decay)
    ema = EmaParams(params.copy(), cfg.ema_decay)
    for epoch in range(cfg.epochs):
        order = key.child("epoch", epoch).generator().permutation(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            x, t, cond, target = make_batch(idx, key.child("batch", epoch, b))
            _, grads = loss_and_grad(params, x, t, cond, target)
            params, state = adamw_step(state, params, grads)
            ema = ema_update(ema, params, ema_warmup_decay(cfg.ema_decay, state.step))
    return ema.shadow


def save_checkpoint(path, params: MlpParams, config: dict | None = None) -> None:
    """Write the little-endian binary checkpoint plus a JSON sidecar.

    Layout: 8-byte magic, then u32 version, layer count, cond width, freq
    count; per layer u32 (fan_out, fan_in); the frequency table as f64; then
    per layer the weight matrix (row-major) followed by its bias, all f64.
    """
    path = Path(path)
    chunks = [MAGIC, struct.pack("<4I", VERSION, len(params.weights), params.cond_width, params.n_freqs)]
    for w in params.weights:
        chunks.append(struct.pack("<2I", *w.shape))
    chunks.append(np.ascontiguousarray(params.freqs, dtype="<f8").tobytes())
    for w, b in zip(params.weights, params.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    path.write_bytes(b"".join(chunks))
    sidecar = {"format": "pmrf-mlp", "version": VERSION, "config": config or {}}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Read a checkpoint; returns ``(params, config)``."""
    path = Path(path)
    buf = path.read_bytes()
    if buf[:8] != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise Truncated(f"{path}: truncated at byte {pos}")
        out = buf[pos : pos + n]
        pos += n
        return out

    version, n_layers, cond_width, n_freqs = struct.unpack("<4I", take(16))
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    shapes = [struct.unpack("<2I", take(8)) for _ in range(n_layers)]
    freqs = np.frombuffer(take(8 * n_freqs), dtype="<f8").astype(np.float64)
    weights, biases = [], []
    for fo, fi in shapes:
        weights.append(np.frombuffer(take(8 * fo * fi), dtype="<f8").reshape(fo, fi).astype(np.float64))
        biases.append(np.frombuffer(take(8 * fo), dtype="<f8").astype(np.float64))
    sidecar = Path(str(path) + ".json")
    config = json.loads(sidecar.read_text())["config"] if sidecar.exists() else {}
    return MlpParams(weights, biases, freqs, int(cond_width)), config
