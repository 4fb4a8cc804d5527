"""Experiment configuration: an INI file with fixed sections.

Grammar (UTF-8, ``key = value`` lines, ``#`` or ``;`` comments)::

    [experiment]   task, dataset, n, idx_path, test_fraction, seed, output,
                   frechet_pool, dot_fit_samples
    [degradation]  noise_sigma, sr_factor, mask_fraction, blur_ksize,
                   sigma_range, r_range, delta_range   (ranges as "lo, hi")
    [flow]         methods (comma list), steps (comma list), sigma_s
    [train]        epochs, batch_size, lr, beta1, beta2, eps, weight_decay,
                   ema_decay, hidden (comma list), n_freqs
    [mmse]         same keys as [train]; unset keys inherit from [train],
                   except weight_decay which defaults to 0

Every flow method is trained with the single [train] block, so the
architecture and optimizer are shared across methods by construction.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..degrade import DegradationSpec
from ..errors import ConfigError
from ..flows import METHODS
from ..neural import TrainConfig

TASKS = ("denoise", "super_resolution", "inpaint", "colorize", "pipeline", "gauss1d")
DATASETS = ("synthetic_sprites", "two_moons_2d", "gauss1d", "idx_file")
ALL_METHODS = METHODS + ("dot",)

_TASK_KIND = {"gauss1d": "denoise"}

_TRAIN_KEYS = {
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "weight_decay": float,
    "ema_decay": float,
    "n_freqs": int,
}


@dataclass
class ExperimentConfig:
    task: str = "denoise"
    dataset: str = "synthetic_sprites"
    n: int = 10000
    idx_path: str = ""
    test_fraction: float = 0.1
    seed: int = 0
    output: str = "out"
    frechet_pool: int = 1
    dot_fit_samples: int = 1000
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    methods: tuple = ("pmrf", "flow_from_y", "cond_on_y", "cond_on_xstar", "dot")
    steps: tuple = (100,)
    sigma_s: float = 0.025
    train: TrainConfig = field(default_factory=TrainConfig)
    mmse: TrainConfig = field(default_factory=lambda: TrainConfig(weight_decay=0.0))

    def validate(self) -> "ExperimentConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}; expected one of {DATASETS}")
        if self.dataset == "idx_file" and not Path(self.idx_path).is_file():
            raise ConfigError(f"idx_path {self.idx_path!r} does not exist")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")
        if not self.methods:
            raise ConfigError("no methods configured")
        if not self.steps or any(k < 1 for k in self.steps):
            raise ConfigError("steps must be a non-empty list of positive integers")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        return self

    @property
    def flow_methods(self) -> tuple:
        return tuple(m for m in self.methods if m != "dot")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["degradation"] = self.degradation.to_dict()
        d["methods"] = list(self.methods)
        d["steps"] = list(self.steps)
        d["train"]["hidden"] = list(self.train.hidden)
        d["mmse"]["hidden"] = list(self.mmse.hidden)
        return d

    def hash(self) -> str:
        """SHA-256 of the canonical config, excluding the output location."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _list(value: str, cast):
    return tuple(cast(v.strip()) for v in value.split(",") if v.strip())


def _train_block(section, base: TrainConfig) -> TrainConfig:
    updates = {}
    for k, cast in _TRAIN_KEYS.items():
        if k in section:
            updates[k] = cast(section[k])
    if "hidden" in section:
        updates["hidden"] = _list(section["hidden"], int)
    return replace(base, **updates)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from e
    known = {"experiment", "degradation", "flow", "train", "mmse"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")

    cfg = ExperimentConfig()
    try:
        if cp.has_section("experiment"):
            e = cp["experiment"]
            cfg.task = e.get("task", cfg.task)
            cfg.dataset = e.get("dataset", cfg.dataset)
            cfg.n = e.getint("n", cfg.n)
            cfg.idx_path = e.get("idx_path", cfg.idx_path)
            cfg.test_fraction = e.getfloat("test_fraction", cfg.test_fraction)
            cfg.seed = e.getint("seed", cfg.seed)
            cfg.output = e.get("output", cfg.output)
            cfg.frechet_pool = e.getint("frechet_pool", cfg.frechet_pool)
            cfg.dot_fit_samples = e.getint("dot_fit_samples", cfg.dot_fit_samples)

        kind = _TASK_KIND.get(cfg.task, cfg.task)
        deg = {"kind": kind}
        if cp.has_section("degradation"):
            s = cp["degradation"]
            for k, cast in (("noise_sigma", float), ("blur_sigma", float), ("downsample_factor", float),
                            ("mask_fraction", float), ("sr_factor", int), ("blur_ksize", int)):
                if k in s:
                    deg[k] = cast(s[k])
            for k in ("sigma_range", "r_range", "delta_range"):
                if k in s:
                    deg[k] = _list(s[k], float)
        cfg.degradation = DegradationSpec(**deg)

        if cp.has_section("flow"):
            f = cp["flow"]
            if "methods" in f:
                cfg.methods = _list(f["methods"], str)
            if "steps" in f:
                cfg.steps = _list(f["steps"], int)
            cfg.sigma_s = f.getfloat("sigma_s", cfg.sigma_s)

        if cp.has_section("train"):
            cfg.train = _train_block(cp["train"], cfg.train)
        mmse_base = replace(cfg.train, weight_decay=0.0)
        cfg.mmse = _train_block(cp["mmse"], mmse_base) if cp.has_section("mmse") else mmse_base
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: ExperimentConfig) -> str:
    """Render a config back to the INI grammar (round-trips through parse_config)."""
    d = cfg.degradation
    t, m = cfg.train, cfg.mmse

    def block(name, tc: TrainConfig):
        lines = [f"[{name}]"]
        for k in _TRAIN_KEYS:
            lines.append(f"{k} = {getattr(tc, k)!r}")
        lines.append("hidden = " + ", ".join(str(h) for h in tc.hidden))
        return lines

    lines = [
        "[experiment]",
        f"task = {cfg.task}",
        f"dataset = {cfg.dataset}",
        f"n = {cfg.n}",
        f"idx_path = {cfg.idx_path}",
        f"test_fraction = {cfg.test_fraction!r}",
        f"seed = {cfg.seed}",
        f"output = {cfg.output}",
        f"frechet_pool = {cfg.frechet_pool}",
        f"dot_fit_samples = {cfg.dot_fit_samples}",
        "",
        "[degradation]",
        f"noise_sigma = {d.noise_sigma!r}",
        f"blur_sigma = {d.blur_sigma!r}",
        f"downsample_factor = {d.downsample_factor!r}",
        f"mask_fraction = {d.mask_fraction!r}",
        f"sr_factor = {d.sr_factor}",
        f"blur_ksize = {d.blur_ksize}",
        f"sigma_range = {d.sigma_range[0]!r}, {d.sigma_range[1]!r}",
        f"r_range = {d.r_range[0]!r}, {d.r_range[1]!r}",
        f"delta_range = {d.delta_range[0]!r}, {d.delta_range[1]!r}",
        "",
        "[flow]",
        "methods = " + ", ".join(cfg.methods),
        "steps = " + ", ".join(str(k) for k in cfg.steps),
        f"sigma_s = {cfg.sigma_s!r}",
        "",
        *block("train", t),
        "",
        *block("mmse", m),
        "",
    ]
    return "\n".join(lines)
