"""Command-line entry point: ``pmrf-lab <subcommand>``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..errors import PmrfError, StageError
from ..flows import mmse_predictor
from ..neural import save_checkpoint
from . import experiment as ex
from .config import ExperimentConfig, load_config
from .oracle_check import format_table, run_all

log = logging.getLogger("pmrf_lab")


def _common(p: argparse.ArgumentParser, need_config: bool = True) -> None:
    p.add_argument("--config", required=need_config, help="experiment INI file")
    p.add_argument("--seed", type=int, help="override [experiment] seed")
    p.add_argument("--out", help="output directory (overrides [experiment] output)")
    p.add_argument("--strict-determinism", action="store_true",
                   help="single-threaded BLAS and no wall-clock fields, for byte-identical reruns")
    p.add_argument("--force", action="store_true", help="overwrite a report written for a different config")
    p.add_argument("-v", "--verbose", action="store_true")


def _load(args) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, output=args.out)
    return cfg, Path(cfg.output)


def cmd_oracle_check(args) -> int:
    results = run_all(args.mc_n)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_train_mmse(args) -> int:
    cfg, out = _load(args)
    with ex.strict_mode(args.strict_determinism):
        with ex.stage("prepare"):
            prep = ex.prepare(cfg)
        with ex.stage("train-mmse"):
            fparams = ex.fit_mmse(cfg, prep)
            out.mkdir(parents=True, exist_ok=True)
            save_checkpoint(out / "mmse.ckpt", fparams, {"config_hash": cfg.hash(), "role": "mmse"})
    print(f"wrote {out / 'mmse.ckpt'}")
    return 0


def _methods(args, cfg):
    return tuple(args.method) if getattr(args, "method", None) else cfg.methods


def cmd_train_flow(args) -> int:
    cfg, out = _load(args)
    with ex.strict_mode(args.strict_determinism):
        with ex.stage("prepare"):
            prep = ex.prepare(cfg)
        with ex.stage("load-mmse"):
            fparams, _ = ex.load_models_from(out, cfg, ())
        fstar = mmse_predictor(fparams)
        models = {}
        for method in _methods(args, cfg):
            with ex.stage(f"train-{method}"):
                models[method] = ex.fit_dot_map(cfg, prep, fstar) if method == "dot" else ex.fit_flow(cfg, prep, fstar, method)
        ex.save_models_to(out, cfg, fparams, models)
    print(f"trained {', '.join(models)} into {out}")
    return 0


def _restored_path(out: Path, method: str, k) -> Path:
    return out / "restored" / (f"{method}.npy" if k is None else f"{method}_k{k}.npy")


def _cells(cfg, methods, steps):
    for method in methods:
        for k in ([None] if method == "dot" else steps):
            yield method, k


def cmd_restore(args) -> int:
    cfg, out = _load(args)
    methods = _methods(args, cfg)
    with ex.strict_mode(args.strict_determinism):
        with ex.stage("prepare"):
            prep = ex.prepare(cfg)
        with ex.stage("load-models"):
            fparams, models = ex.load_models_from(out, cfg, methods)
        fstar = mmse_predictor(fparams)
        (out / "restored").mkdir(parents=True, exist_ok=True)
        np.save(_restored_path(out, "posterior_mean", None), fstar(prep.y_test))
        for method, k in _cells(cfg, methods, cfg.steps):
            with ex.stage(f"restore-{method}-k{k}"):
                np.save(_restored_path(out, method, k), ex.restore(cfg, prep, fstar, method, models[method], k))
    print(f"wrote restorations under {out / 'restored'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg, out = _load(args)
    with ex.strict_mode(args.strict_determinism):
        with ex.stage("prepare"):
            prep = ex.prepare(cfg)
        with ex.stage("evaluate"):
            xstar = np.load(_restored_path(out, "posterior_mean", None))
            rows = [ex.evaluate_row(cfg, prep, xstar, "posterior_mean", None, xstar)]
            for method, k in _cells(cfg, cfg.methods, cfg.steps):
                rows.append(ex.evaluate_row(cfg, prep, xstar, method, k, np.load(_restored_path(out, method, k))))
        with ex.stage("report"):
            report = ex.build_report(cfg, rows, args.strict_determinism, None)
            paths = ex.write_report(report, out, force=args.force)
    print("\n".join(str(p) for p in paths))
    return 0


def cmd_sweep_k(args) -> int:
    cfg, out = _load(args)
    steps = tuple(int(k) for k in args.steps.split(",")) if args.steps else cfg.steps
    method = args.sweep_method
    sweep_cfg = replace(cfg, methods=(method,), steps=steps)
    with ex.strict_mode(args.strict_determinism):
        with ex.stage("prepare"):
            prep = ex.prepare(cfg)
        with ex.stage("load-models"):
            fparams, models = ex.load_models_from(out, cfg, (method,))
        fstar = mmse_predictor(fparams)
        xstar = fstar(prep.y_test)
        rows = [ex.evaluate_row(cfg, prep, xstar, "posterior_mean", None, xstar)]
        for k in steps:
            with ex.stage(f"sweep-{method}-k{k}"):
                recon = ex.restore(cfg, prep, fstar, method, models[method], k)
                rows.append(ex.evaluate_row(cfg, prep, xstar, method, k, recon))
        with ex.stage("report"):
            report = ex.build_report(sweep_cfg, rows, args.strict_determinism, None)
            ex.write_report(report, out, name="sweep_k", force=args.force)
    _print_rows(rows)
    return 0


def cmd_run(args) -> int:
    cfg, out = _load(args)
    report = ex.run_experiment(cfg, strict=args.strict_determinism, out_dir=out, force=args.force)
    _print_rows(report["rows"])
    return 0


def _print_rows(rows) -> None:
    print(f"{'method':<15} {'k':>4} {'rmse':>10} {'psnr':>8} {'frechet':>10}")
    for r in rows:
        psnr = r["psnr"] if isinstance(r["psnr"], str) else f"{r['psnr']:.2f}"
        k = "-" if r["k"] is None else r["k"]
        print(f"{r['method']:<15} {k:>4} {r['rmse']:>10.5f} {psnr:>8} {r['frechet']:>10.5f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmrf-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle-check", help="verify the scalar Gaussian closed forms")
    _common(p, need_config=False)
    p.add_argument("--mc-n", type=int, default=1_000_000, help="Monte Carlo sample count")
    p.set_defaults(func=cmd_oracle_check)

    for name, func, helptext in (
        ("train-mmse", cmd_train_mmse, "train the posterior-mean regressor"),
        ("train-flow", cmd_train_flow, "train vector fields (and the DOT map)"),
        ("restore", cmd_restore, "restore the test split with trained models"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name != "train-mmse":
            p.add_argument("--method", action="append", help="restrict to this method (repeatable)")
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="score restorations and write report files")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-k", help="evaluate one trained flow over several step counts")
    _common(p)
    p.add_argument("--method", dest="sweep_method", default="pmrf")
    p.add_argument("--steps", help="comma-separated K values (default: config steps)")
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("run", help="full experiment: train, restore, evaluate, report")
    _common(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as e:
        print(f"error: stage {e.stage} failed: {e.cause}", file=sys.stderr)
        return 1
    except (PmrfError, FileExistsError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
