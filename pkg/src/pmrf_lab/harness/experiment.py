"""Controlled comparison of restoration frameworks on toy data.

Stages: prepare data -> posterior-mean regressor -> one vector field per flow
method (or the Gaussian OT map for ``dot``) -> restore the test split for
every K -> distortion and Fréchet metrics -> report files.
"""
from __future__ import annotations

import contextlib
import csv
import io
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..degrade import degrade, upscale_nearest
from ..dot_baseline import AffineMap, dot_restore, fit_dot
from ..errors import StageError
from ..flows import FlowSpec, baseline_restore, mmse_predictor, pmrf_restore, train_flow, train_mmse
from ..metrics import frechet_from_samples, mse_rmse_psnr, pool_images
from ..neural import MlpParams, load_checkpoint, save_checkpoint
from ..tensor_core import RngKey
from .config import ExperimentConfig, dump_config
from .data import load_idx, synth_dataset

log = logging.getLogger(__name__)

REPORT_FIELDS = ("method", "k", "mse", "rmse", "psnr", "ind_rmse", "frechet", "n")


@contextlib.contextmanager
def strict_mode(enabled: bool):
    """Pin BLAS to one thread so floating-point reductions have a fixed order."""
    if not enabled:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


@dataclass
class Prepared:
    x_train: np.ndarray  # (n, d) flattened
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    ydag_train: np.ndarray  # y up-scaled to x's shape
    ydag_test: np.ndarray
    image_shape: tuple | None  # (H, W, C) for image data


def _load_clean(cfg: ExperimentConfig, key: RngKey) -> np.ndarray:
    if cfg.dataset == "idx_file":
        return load_idx(cfg.idx_path)[: cfg.n]
    kind = "sprites" if cfg.dataset == "synthetic_sprites" else cfg.dataset
    return synth_dataset(kind, cfg.n, key)


def prepare(cfg: ExperimentConfig) -> Prepared:
    root = RngKey(cfg.seed)
    clean = _load_clean(cfg, root.child("data"))
    n = clean.shape[0]
    image_shape = tuple(clean.shape[1:]) if clean.ndim == 4 else None
    dkey = root.child("degrade")
    ys, ydag = [], []
    for i in range(n):
        y = degrade(clean[i], cfg.degradation, dkey.child(i))
        ys.append(y.reshape(-1))
        if image_shape is not None and y.shape != clean[i].shape:
            y = upscale_nearest(y, image_shape[:2])
        ydag.append(y.reshape(-1))
    x = clean.reshape(n, -1)
    y = np.stack(ys)
    yd = np.stack(ydag)
    n_test = max(1, int(round(cfg.test_fraction * n)))
    cut = n - n_test
    return Prepared(x[:cut], y[:cut], x[cut:], y[cut:], yd[:cut], yd[cut:], image_shape)


def fit_mmse(cfg: ExperimentConfig, prep: Prepared) -> MlpParams:
    return train_mmse(cfg.mmse, prep.x_train, prep.y_train, RngKey(cfg.seed).child("mmse"))


def fit_flow(cfg: ExperimentConfig, prep: Prepared, fstar, method: str) -> MlpParams:
    spec = FlowSpec(method, cfg.sigma_s, max(cfg.steps))
    # identical key for every method: same init and batch order across frameworks
    key = RngKey(cfg.seed).child("flow")
    return train_flow(cfg.train, prep.x_train, prep.y_train, fstar, spec, key, y_dagger=prep.ydag_train)


def fit_dot_map(cfg: ExperimentConfig, prep: Prepared, fstar) -> AffineMap:
    m = min(cfg.dot_fit_samples, prep.x_train.shape[0])
    return fit_dot(fstar(prep.y_train[:m]), prep.x_train[:m], prep.image_shape)


def restore(cfg: ExperimentConfig, prep: Prepared, fstar, method: str, model, k: int | None) -> np.ndarray:
    key = RngKey(cfg.seed).child("restore", method)
    if method == "dot":
        return dot_restore(fstar, model, prep.y_test)
    spec = FlowSpec(method, cfg.sigma_s, k)
    if method == "pmrf":
        return pmrf_restore(fstar, model, prep.y_test, spec, key)
    if method == "cond_on_y":
        return baseline_restore(method, model, prep.y_test, spec, key, out_shape=prep.x_test.shape)
    if method == "cond_on_xstar":
        return baseline_restore(method, model, fstar(prep.y_test), spec, key)
    return baseline_restore(method, model, prep.ydag_test, spec, key)


def evaluate_row(cfg: ExperimentConfig, prep: Prepared, xstar_test, method: str, k, recon) -> dict:
    dist = mse_rmse_psnr(prep.x_test, recon, xstar_test)
    fd = frechet_from_samples(
        pool_images(recon, prep.image_shape, cfg.frechet_pool),
        pool_images(prep.x_test, prep.image_shape, cfg.frechet_pool),
    )
    row = {"method": method, "k": k}
    row.update(dist.to_dict())
    row["frechet"] = fd
    return row


def check_complete(cfg: ExperimentConfig, rows: list) -> None:
    have = {(r["method"], r["k"]) for r in rows}
    missing = [(m, k) for m in cfg.flow_methods for k in cfg.steps if (m, k) not in have]
    if "dot" in cfg.methods and ("dot", None) not in have:
        missing.append(("dot", None))
    if missing:
        raise StageError("report", RuntimeError(f"missing report cells: {missing}"))


def build_report(cfg: ExperimentConfig, rows: list, strict: bool, started: float | None = None) -> dict:
    check_complete(cfg, rows)
    report = {
        "tool": f"pmrf_lab {__version__}",
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "seeds": {"seed": cfg.seed},
        "strict_determinism": strict,
        "rows": rows,
    }
    if not strict:
        # wall-clock fields would break byte-identical reruns, so strict mode omits them
        report["timestamps"] = {"started": started, "finished": time.time()}
    return report


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(report: dict, out_dir, name: str = "report", force: bool = False) -> list:
    """Write JSON, CSV and a gnuplot plane file; refuses to clobber a different config's report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jpath = out / f"{name}.json"
    if jpath.exists() and not force:
        old = json.loads(jpath.read_text())
        if old.get("config_hash") != report["config_hash"]:
            raise FileExistsError(
                f"{jpath} holds a report for config {old.get('config_hash')}; pass --force to overwrite"
            )
    jpath.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

    buf = io.StringIO()
    buf.write(f"# config_hash={report['config_hash']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in report["rows"]:
        w.writerow([_fmt(r[f]) for f in REPORT_FIELDS])
    cpath = out / f"{name}.csv"
    cpath.write_text(buf.getvalue())

    lines = [f"# config_hash={report['config_hash']}", "# method k rmse frechet"]
    for r in report["rows"]:
        lines.append(f"{r['method']} {r['k'] if r['k'] is not None else '-'} {r['rmse']!r} {r['frechet']!r}")
    ppath = out / f"{name}.plane.dat"
    ppath.write_text("\n".join(lines) + "\n")
    return [jpath, cpath, ppath]


def run_experiment(cfg: ExperimentConfig, strict: bool = True, out_dir=None, force: bool = False,
                   save_models: bool = True) -> dict:
    """Full pipeline; returns the report dict and writes it under the output directory."""
    started = time.time()
    out = Path(out_dir if out_dir is not None else cfg.output)
    with strict_mode(strict):
        with stage("prepare"):
            prep = prepare(cfg)
        with stage("train-mmse"):
            fparams = fit_mmse(cfg, prep)
        fstar = mmse_predictor(fparams)
        xstar_test = fstar(prep.y_test)
        rows = [evaluate_row(cfg, prep, xstar_test, "posterior_mean", None, xstar_test)]
        models = {}
        for method in cfg.methods:
            with stage(f"train-{method}"):
                models[method] = fit_dot_map(cfg, prep, fstar) if method == "dot" else fit_flow(cfg, prep, fstar, method)
            ks = [None] if method == "dot" else list(cfg.steps)
            for k in ks:
                with stage(f"restore-{method}-k{k}"):
                    recon = restore(cfg, prep, fstar, method, models[method], k)
                with stage(f"evaluate-{method}-k{k}"):
                    rows.append(evaluate_row(cfg, prep, xstar_test, method, k, recon))
        with stage("report"):
            report = build_report(cfg, rows, strict, started)
            write_report(report, out, force=force)
            if save_models:
                save_models_to(out, cfg, fparams, models)
    return report


def save_models_to(out, cfg: ExperimentConfig, fparams: MlpParams, models: dict) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": cfg.hash()}
    save_checkpoint(out / "mmse.ckpt", fparams, {**meta, "role": "mmse"})
    for method, model in models.items():
        if method == "dot":
            (out / "dot_map.json").write_text(json.dumps({**meta, "map": model.to_dict()}) + "\n")
        else:
            save_checkpoint(out / f"flow_{method}.ckpt", model, {**meta, "role": "flow", "method": method,
                                                                  "sigma_s": cfg.sigma_s})
    (out / "config.ini").write_text(dump_config(cfg))


def load_models_from(out, cfg: ExperimentConfig, methods) -> tuple:
    out = Path(out)
    fparams, _ = load_checkpoint(out / "mmse.ckpt")
    models = {}
    for method in methods:
        if method == "dot":
            models[method] = AffineMap.from_dict(json.loads((out / "dot_map.json").read_text())["map"])
        else:
            models[method], _ = load_checkpoint(out / f"flow_{method}.ckpt")
    return fparams, models
