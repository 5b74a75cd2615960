"""Command-line driver: ``nasuq {search,ensemble,evaluate,report,make-synthetic}``.

Exit codes: 0 success, 1 internal error, 2 usage or configuration error.
Relative output directories are resolved under ``$NASUQ_RUN_ROOT`` when set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

from .config import load_config
from .ensemble import InsufficientModels
from .errors import ConfigError, FormatError
from .pipeline import RunDir, TrainingEvaluator, build_ensemble, evaluate_run, prepare_task
from .reports import write_search_report
from .search import run_search
from .hpo import BayesianOptimizer

log = logging.getLogger("nasuq")
RUN_ROOT_ENV = "NASUQ_RUN_ROOT"


class UsageError(Exception):
    pass


def resolve_run_dir(path):
    path = Path(path)
    root = os.environ.get(RUN_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _config_for(args):
    if getattr(args, "run", None):
        run = RunDir(resolve_run_dir(args.run))
        if not run.config.exists():
            raise ConfigError(f"{run.root} has no config.json; run 'search' first")
        cfg = load_config(run.config)
        return cfg.with_overrides(output_dir=str(run.root), k=getattr(args, "k", None)), run
    if not getattr(args, "config", None):
        raise UsageError("either --config or --run is required")
    cfg = load_config(args.config).with_overrides(
        workers=getattr(args, "workers", None),
        max_evals=getattr(args, "max_evals", None),
        seed=getattr(args, "seed", None),
        k=getattr(args, "k", None),
    )
    run = RunDir(resolve_run_dir(cfg.output_dir))
    return cfg.with_overrides(output_dir=str(run.root)), run


def _check_data(cfg):
    if cfg.task == "synthetic":
        return
    for key in ("snapshots", "mask"):
        path = Path(cfg["data"][key])
        if not path.exists():
            raise ConfigError(f"data.{key}: {path} does not exist")


def cmd_search(args):
    cfg, run = _config_for(args)
    _check_data(cfg)
    if run.catalog.exists() and not args.force:
        log.info("%s already holds a catalog; use --force to rerun", run.root)
        return 0
    if args.force and run.root.exists():
        for sub in (run.checkpoints, run.task, run.reports):
            shutil.rmtree(sub, ignore_errors=True)
        for f in (run.catalog, run.timings, run.ensemble):
            f.unlink(missing_ok=True)
    run.create()
    cfg.save(run.config)
    task = prepare_task(cfg, run)
    evaluator = TrainingEvaluator(task, run.root, cfg["training"])
    bo = cfg["bo"]
    optimizer = BayesianOptimizer(cfg.hyperspace(), bo["kappa"], bo["liar"], bo["pool_size"], bo["length_scale"], bo["jitter"])

    def progress(rec, population):
        log.info("eval %d (#%d) %s nll=%.4f pop=%d", rec.id, rec.completion_index, rec.status, rec.valid_nll, len(population))

    catalog = run_search(task.space, cfg.hyperspace(), evaluator, cfg.search_config(), optimizer, on_complete=progress)
    catalog.write(run.catalog, run.timings)
    log.info("catalog: %d records (%d successful) in %s", len(catalog), len(catalog.successes()), run.catalog)
    return 0


def cmd_ensemble(args):
    cfg, run = _config_for(args)
    if not run.catalog.exists():
        raise ConfigError(f"{run.root} has no catalog; run 'search' first")
    manifest = build_ensemble(run, cfg["ensemble"]["k"])
    for m in manifest["members"]:
        print(f"{m['id']}\t{m['valid_nll']:.6f}")
    return 0


def cmd_evaluate(args):
    cfg, run = _config_for(args)
    if not run.ensemble.exists():
        build_ensemble(run, cfg["ensemble"]["k"])
    _check_data(cfg)
    summary = evaluate_run(run, cfg)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_report(args):
    cfg, run = _config_for(args)
    if not run.catalog.exists():
        raise ConfigError(f"{run.root} has no catalog; run 'search' first")
    summary = write_search_report(run.read_catalog(), run.reports, cfg["search"]["population_size"], args.window)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_make_synthetic(args):
    """Write a small SST-like snapshot/mask pair in the engine's binary format."""
    from .sst.grid import write_mask, write_snapshots
    from .sst.synth import synthetic_sst

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grids, mask = synthetic_sst(args.times, (args.height, args.width), args.seed)
    write_snapshots(out / "sst.bin", grids)
    write_mask(out / "mask.bin", mask)
    print(f"wrote {out / 'sst.bin'} ({grids.shape[0]} x {grids.shape[1]} x {grids.shape[2]}) and {out / 'mask.bin'}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="nasuq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, run=True):
        sp.add_argument("--config", help="run configuration (YAML or JSON)")
        if run:
            sp.add_argument("--run", help="existing run directory (uses its config.json)")
        sp.add_argument("--k", type=int, help="ensemble size")

    s = sub.add_parser("search", help="run the architecture + hyperparameter search")
    common(s, run=False)
    s.add_argument("--workers", type=int)
    s.add_argument("--max-evals", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--force", action="store_true", help="discard an existing run and start over")
    s.set_defaults(func=cmd_search)

    e = sub.add_parser("ensemble", help="select the top-K models into an ensemble manifest")
    common(e)
    e.set_defaults(func=cmd_ensemble)

    for name in ("evaluate", "predict"):
        v = sub.add_parser(name, help="evaluate the ensemble on test data and write reports")
        common(v)
        v.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="write convergence and model-spectrum CSVs")
    common(r)
    r.add_argument("--window", type=int, default=25, help="moving-average window")
    r.set_defaults(func=cmd_report)

    m = sub.add_parser("make-synthetic", help="write a synthetic SST dataset for smoke runs")
    m.add_argument("--out", required=True)
    m.add_argument("--times", type=int, default=300)
    m.add_argument("--height", type=int, default=18)
    m.add_argument("--width", type=int, default=36)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_make_synthetic)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, InsufficientModels, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit code 1
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
