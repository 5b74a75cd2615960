"""Task preparation, the training evaluator, ensemble loading and evaluation.

A run directory holds::

    config.json        verbatim validated configuration
    catalog.jsonl      one CatalogRecord per line
    timings.jsonl      wall time / timestamp per record
    checkpoints/       NNW1 weight files, referenced relative to the run dir
    task/              space.json, pod.bin, scaler.json, sensors.json
    ensemble.json      top-K manifest
    reports/           CSV tables, PGM heatmaps, metrics.json
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arch_space import SearchSpace, decode, dense_space, recurrent_space
from .ensemble import decompose, project_uncertainty_physical, select_top_k
from .errors import ConfigError
from .nn import TrainingConfig, build_network, forward_gaussian, load_weights, save_weights, train
from .pod import fit_pod, load_basis, project, save_basis
from .reports import write_csv, write_pgm
from .search import Catalog, EvalResult
from .sst import metrics
from .sst.grid import flatten_ocean, load_snapshots, unflatten_ocean
from .sst.synth import heteroscedastic
from .sst.tasks import SensorSet, build_forecast_windows, observe, sample_sensors

logger = logging.getLogger(__name__)


class RunDir:
    def __init__(self, root):
        self.root = Path(root)

    config = property(lambda self: self.root / "config.json")
    catalog = property(lambda self: self.root / "catalog.jsonl")
    timings = property(lambda self: self.root / "timings.jsonl")
    checkpoints = property(lambda self: self.root / "checkpoints")
    task = property(lambda self: self.root / "task")
    ensemble = property(lambda self: self.root / "ensemble.json")
    reports = property(lambda self: self.root / "reports")

    def create(self):
        for d in (self.root, self.checkpoints, self.task, self.reports):
            d.mkdir(parents=True, exist_ok=True)
        return self

    def read_catalog(self):
        return Catalog.read(self.catalog, self.timings)


@dataclass
class Task:
    kind: str
    space: SearchSpace
    train: tuple
    valid: tuple
    extra: dict = field(default_factory=dict)


def _split_valid(x, y, fraction):
    """Hold out the last ``fraction`` of samples for validation."""
    n_valid = max(1, int(round(len(x) * fraction)))
    if n_valid >= len(x):
        raise ConfigError("validation split leaves no training samples")
    return (x[:-n_valid], y[:-n_valid]), (x[-n_valid:], y[-n_valid:])


def _space_options(cfg):
    s = cfg["space"]
    return dict(num_nodes=s["num_nodes"], widths=tuple(s["widths"]))


def _load_flat(cfg):
    grids, mask = load_snapshots(cfg["data"]["snapshots"], cfg["data"]["mask"])
    return flatten_ocean(grids, mask), mask


def prepare_task(cfg, run=None):
    """Build training/validation data and the search space for ``cfg.task``.

    Derived artifacts (POD basis, scaler, sensors) are written to the run
    directory when one is given.
    """
    kind = cfg.task
    vf = cfg["training"]["valid_fraction"]
    if kind == "synthetic":
        s = cfg["synthetic"]
        x, y = heteroscedastic(s["n_samples"], cfg["seed"], tuple(s["x_range"]), s["noise"])
        tr, va = _split_valid(x, y, vf)
        space = dense_space(1, 1, activations=tuple(cfg["space"]["activations"]), **_space_options(cfg))
        task = Task(kind, space, tr, va)
    elif kind == "forecast":
        f = cfg["forecast"]
        flat, mask = _load_flat(cfg)
        train_snap = np.asarray(flat[: f["n_train"]], dtype=np.float64)
        basis = fit_pod(train_snap.T, f["n_modes"], f["energy"], f["max_modes"])
        logger.info("POD: %d modes, %.4f energy retained", basis.n_modes, basis.energy_fraction)
        coeffs = project(basis, train_snap.T).T
        if f["standardize"]:
            mu, sd = coeffs.mean(axis=0), coeffs.std(axis=0)
            sd[sd == 0] = 1.0
        else:
            mu, sd = np.zeros(basis.n_modes), np.ones(basis.n_modes)
        win = build_forecast_windows((coeffs - mu) / sd, f["window"])
        y = win.targets.reshape(len(win), -1)
        tr, va = _split_valid(win.inputs, y, vf)
        space = recurrent_space(basis.n_modes, f["window"] * basis.n_modes, **_space_options(cfg))
        task = Task(kind, space, tr, va, {"basis": basis, "scaler": (mu, sd), "mask": mask})
        if run is not None:
            save_basis(run.task / "pod.bin", basis)
            (run.task / "scaler.json").write_text(json.dumps({"mean": mu.tolist(), "std": sd.tolist()}) + "\n")
    elif kind == "reconstruct":
        r = cfg["reconstruct"]
        flat, mask = _load_flat(cfg)
        seed = cfg["seed"] if r["sensor_seed"] is None else r["sensor_seed"]
        sensors = sample_sensors(mask, r["sensors"], tuple(r["band"]), seed)
        train_snap = np.asarray(flat[: r["n_train"]], dtype=np.float64)
        tr, va = _split_valid(observe(sensors, train_snap), train_snap, vf)
        space = dense_space(len(sensors), mask.n_ocean, activations=tuple(cfg["space"]["activations"]), **_space_options(cfg))
        task = Task(kind, space, tr, va, {"sensors": sensors, "mask": mask})
        if run is not None:
            (run.task / "sensors.json").write_text(json.dumps(sensors.to_dict()) + "\n")
    else:
        raise ConfigError(f"unknown task {kind!r}")
    if run is not None:
        (run.task / "space.json").write_text(json.dumps(task.space.to_dict()) + "\n")
    return task


class TrainingEvaluator:
    """Worker-side evaluation: decode, initialise, train, checkpoint."""

    def __init__(self, task, run_root=None, training=None):
        self.space = task.space
        self.train = task.train
        self.valid = task.valid
        self.run_root = None if run_root is None else Path(run_root)
        self.training = dict(training or {})
        self.training.pop("valid_fraction", None)

    def __call__(self, job):
        spec = decode(self.space, job.arch)
        net = build_network(spec, job.seed)
        cfg = TrainingConfig(
            learning_rate=job.hyper.learning_rate,
            batch_size=job.hyper.batch_size,
            optimizer=job.hyper.optimizer,
            seed=job.seed,
            **self.training,
        )
        res = train(net, self.train, self.valid, cfg)
        ckpt = None
        if self.run_root is not None:
            rel = Path("checkpoints") / f"{job.id:05d}.nnw"
            save_weights(self.run_root / rel, res.network)
            ckpt = str(rel)
        return EvalResult(res.best_valid_nll, ckpt, res.diverged, res.epochs_run)


def load_members(run, records):
    space = SearchSpace.from_dict(json.loads((run.task / "space.json").read_text()))
    nets = []
    for r in records:
        spec = decode(space, r.arch)
        nets.append(load_weights(run.root / r.checkpoint, spec))
    return nets


def build_ensemble(run, k):
    """Select the top-``k`` records and write the ensemble manifest."""
    records = select_top_k(run.read_catalog(), k)
    manifest = {
        "k": k,
        "members": [
            {"id": r.id, "valid_nll": r.valid_nll, "checkpoint": r.checkpoint, "arch": list(r.arch), "hyper": r.hyper.to_dict()}
            for r in records
        ],
    }
    run.ensemble.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def read_ensemble(run):
    manifest = json.loads(run.ensemble.read_text())
    catalog = run.read_catalog()
    return [catalog.by_id(m["id"]) for m in manifest["members"]]


def predict_members(nets, x, chunk=512):
    """Member means and variances stacked on axis 0: ``(K, n, out)``."""
    means, vars_ = [], []
    for net in nets:
        mu, var = [], []
        for s in range(0, len(x), chunk):
            p = forward_gaussian(net, x[s : s + chunk])
            mu.append(p.mean)
            var.append(p.var)
        means.append(np.concatenate(mu))
        vars_.append(np.concatenate(var))
    return np.stack(means), np.stack(vars_)


# -- evaluation ----------------------------------------------------------------


def evaluate_run(run, cfg):
    """Evaluate the ensemble of ``run`` on its task's test data; writes reports."""
    records = read_ensemble(run)
    nets = load_members(run, records)
    ids = [r.id for r in records]
    run.reports.mkdir(parents=True, exist_ok=True)
    if cfg.task == "synthetic":
        return _evaluate_synthetic(run, cfg, nets, ids)
    if cfg.task == "forecast":
        return _evaluate_forecast(run, cfg, nets, ids)
    return _evaluate_reconstruct(run, cfg, nets, ids)


def _dump_metrics(run, summary):
    (run.reports / "metrics.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _evaluate_synthetic(run, cfg, nets, ids, n_grid=401):
    s = cfg["synthetic"]
    lo, hi = s["x_range"]
    width = hi - lo
    x = np.linspace(lo - 0.5 * width, hi + 0.5 * width, n_grid)[:, None]
    means, vars_ = predict_members(nets, x)
    ddof_est = "sample" if len(nets) > 1 else "population"
    dec = decompose([_P(m, v) for m, v in zip(means, vars_)], ddof_est)
    true_sd = s["noise"] * np.abs(x[:, 0])
    inside = (x[:, 0] >= lo) & (x[:, 0] <= hi)
    ale_sd = np.sqrt(dec.aleatoric[:, 0])
    rows = [
        (float(xi), float(m), float(a), float(e), float(t), bool(i))
        for xi, m, a, e, t, i in zip(x[:, 0], dec.mean[:, 0], dec.aleatoric[:, 0], dec.epistemic[:, 0], true_sd, inside)
    ]
    write_csv(run.reports / "uncertainty.csv", ["x", "mean", "aleatoric_var", "epistemic_var", "true_sd", "in_support"], rows)
    epi_in = float(dec.epistemic[inside, 0].mean())
    epi_out = float(dec.epistemic[~inside, 0].mean())
    summary = {
        "task": "synthetic",
        "members": ids,
        "estimator": dec.estimator,
        "aleatoric_sd_correlation_in_support": metrics.pearson(ale_sd[inside], true_sd[inside]),
        "epistemic_mean_in_support": epi_in,
        "epistemic_mean_out_of_support": epi_out,
        "epistemic_ratio_out_over_in": epi_out / epi_in if epi_in > 0 else float("inf"),
        "rmse_in_support": float(np.sqrt(np.mean((dec.mean[inside, 0] - x[inside, 0] ** 3) ** 2))),
    }
    return _dump_metrics(run, summary)


@dataclass
class _P:
    mean: np.ndarray
    var: np.ndarray


def _histogram_tables(run, name, per_point, ids, week=None):
    """Write shared-bin histograms and ensemble-minus-member differences."""
    keys = ["ensemble"] + [f"m{i}" for i in ids]
    edges = metrics.histogram_edges(*[per_point[k] for k in keys])
    counts = {k: metrics.rmse_histogram(per_point[k], edges)[0] for k in keys}
    member_mean = np.mean([counts[f"m{i}"] for i in ids], axis=0)
    prefix = [] if week is None else [week]
    hist_rows, diff_rows = [], []
    for b in range(len(edges) - 1):
        hist_rows.append(prefix + [edges[b], edges[b + 1]] + [int(counts[k][b]) for k in keys])
        diffs = [int(metrics.histogram_diff(counts["ensemble"], counts[f"m{i}"])[b]) for i in ids]
        diff_rows.append(prefix + [edges[b], edges[b + 1]] + diffs + [float(counts["ensemble"][b] - member_mean[b])])
    head = (["week"] if week is not None else []) + ["bin_lo", "bin_hi"]
    q = max(1, (len(edges) - 1) // 4)
    low_quartile_net = float(np.sum(counts["ensemble"][:q] - member_mean[:q]))
    return hist_rows, diff_rows, head + keys, head + [f"diff_m{i}" for i in ids] + ["diff_member_mean"], low_quartile_net


def _evaluate_forecast(run, cfg, nets, ids, chunk=64):
    f = cfg["forecast"]
    tau = f["window"]
    flat, mask = _load_flat(cfg)
    basis = load_basis(run.task / "pod.bin")
    sc = json.loads((run.task / "scaler.json").read_text())
    mu, sd = np.asarray(sc["mean"]), np.asarray(sc["std"])
    test = flat[f["n_train"] :]
    # the forecast inputs are always true (projected) test coefficients, never model outputs
    coeffs = np.concatenate([project(basis, np.asarray(test[s : s + 256], dtype=np.float64).T).T for s in range(0, len(test), 256)])
    win = build_forecast_windows((coeffs - mu) / sd, tau)
    means, vars_ = predict_members(nets, win.inputs)
    k, n = means.shape[:2]
    m = basis.n_modes
    means = means.reshape(k, n, tau, m) * sd + mu
    vars_ = vars_.reshape(k, n, tau, m) * sd**2
    ens = means.mean(axis=0)
    region = mask.region(**metrics.EASTERN_PACIFIC)
    V = basis.modes

    rmse_rows, hist_rows, diff_rows, weekly, low_q = [], [], [], {}, {}
    hist_head = diff_head = None
    for w in range(1, tau + 1):
        truth_idx = win.starts + tau + w
        sse = {key: np.zeros(mask.n_ocean) for key in ["ensemble"] + [f"m{i}" for i in ids]}
        reg_win = {key: [] for key in sse}
        abs_err = np.zeros(mask.n_ocean)
        for s in range(0, n, chunk):
            sl = slice(s, s + chunk)
            truth = np.asarray(test[truth_idx[sl]], dtype=np.float64)
            fields = {"ensemble": ens[sl, w - 1] @ V.T + basis.mean}
            for j, i in enumerate(ids):
                fields[f"m{i}"] = means[j, sl, w - 1] @ V.T + basis.mean
            for key, fld in fields.items():
                err2 = (fld - truth) ** 2
                sse[key] += err2.sum(axis=0)
                reg_win[key].append(np.sqrt(err2[:, region].mean(axis=1)))
            if w == f["eval_week"]:
                abs_err += np.abs(fields["ensemble"] - truth).sum(axis=0)
        per_point = {key: np.sqrt(v / n) for key, v in sse.items()}
        for key in sse:
            rmse_rows.append(
                [w, key[1:] if key != "ensemble" else "ensemble",
                 float(np.sqrt(sse[key][region].sum() / (n * region.size))),
                 float(np.concatenate(reg_win[key]).mean()),
                 float(np.sqrt(sse[key].sum() / (n * mask.n_ocean)))]
            )
        weekly[w] = rmse_rows[-len(sse)][2]
        h, d, hist_head, diff_head, low_q[w] = _histogram_tables(run, "forecast", per_point, ids, week=w)
        hist_rows += h
        diff_rows += d
        if w == f["eval_week"]:
            mae = abs_err / n
            eval_point_rmse = per_point["ensemble"]

    write_csv(run.reports / "weekly_rmse.csv", ["week", "model", "rmse", "rmse_window_mean", "rmse_global"], rmse_rows)
    write_csv(run.reports / "rmse_histogram.csv", hist_head, hist_rows)
    write_csv(run.reports / "rmse_histogram_diff.csv", diff_head, diff_rows)

    we = f["eval_week"] - 1
    ale_modal = vars_[:, :, we].mean(axis=(0, 1))
    ale_std = project_uncertainty_physical(ale_modal, V)
    ddof = 1 if k > 1 else 0
    dev = means[:, :, we] - ens[None, :, we]
    cov = np.einsum("kni,knj->ij", dev, dev) / (n * max(k - ddof, 1))
    epi_std = np.sqrt(np.maximum(np.sum((V @ cov) * V, axis=1), 0.0))
    _write_fields(run, mask, {"epistemic_std": epi_std, "aleatoric_std": ale_std, "mae": mae})

    summary = {
        "task": "forecast",
        "members": ids,
        "n_modes": m,
        "energy_fraction": basis.energy_fraction,
        "n_test_windows": n,
        "region_rmse_ensemble": [weekly[w] for w in range(1, tau + 1)],
        "eval_week": f["eval_week"],
        "mae_aleatoric_correlation": metrics.pearson(mae, ale_std),
        "mae_epistemic_correlation": metrics.pearson(mae, epi_std),
        "median_point_rmse_eval_week": float(np.median(eval_point_rmse)),
        "histogram_low_quartile_net": low_q,
    }
    return _dump_metrics(run, summary)


def _write_fields(run, mask, fields):
    rows = []
    lat, lon = mask.point_coords()
    for name, vec in fields.items():
        write_pgm(run.reports / f"{name}.pgm", unflatten_ocean(vec, mask), units="degC")
    keys = list(fields)
    for p in range(mask.n_ocean):
        rows.append([p, float(lat[p]), float(lon[p])] + [float(fields[key][p]) for key in keys])
    write_csv(run.reports / "fields.csv", ["point", "lat", "lon"] + keys, rows)


def _evaluate_reconstruct(run, cfg, nets, ids, chunk=64):
    r = cfg["reconstruct"]
    flat, mask = _load_flat(cfg)
    sensors = SensorSet.from_dict(json.loads((run.task / "sensors.json").read_text()))
    test = flat[r["n_train"] :]
    q = len(test)
    k = len(nets)
    keys = ["ensemble"] + [f"m{i}" for i in ids]
    sse = {key: np.zeros(mask.n_ocean) for key in keys}
    rel = {key: [] for key in keys}
    abs_err = np.zeros(mask.n_ocean)
    ale_sum = np.zeros(mask.n_ocean)
    epi_sum = np.zeros(mask.n_ocean)
    for s in range(0, q, chunk):
        truth = np.asarray(test[s : s + chunk], dtype=np.float64)
        x = observe(sensors, truth)
        means, vars_ = predict_members(nets, x, chunk)
        dec = decompose([_P(mm, vv) for mm, vv in zip(means, vars_)], "sample" if k > 1 else "population")
        fields = {"ensemble": dec.mean}
        for j, i in enumerate(ids):
            fields[f"m{i}"] = means[j]
        tnorm = np.linalg.norm(truth, axis=1)
        for key, fld in fields.items():
            err = fld - truth
            sse[key] += (err**2).sum(axis=0)
            rel[key].append(np.linalg.norm(err, axis=1) / tnorm)
        abs_err += np.abs(dec.mean - truth).sum(axis=0)
        ale_sum += dec.aleatoric.sum(axis=0)
        epi_sum += dec.epistemic.sum(axis=0)
    per_point = {key: np.sqrt(v / q) for key, v in sse.items()}
    hist_rows, diff_rows, hist_head, diff_head, low_q = _histogram_tables(run, "reconstruct", per_point, ids)
    write_csv(run.reports / "rmse_histogram.csv", hist_head, hist_rows)
    write_csv(run.reports / "rmse_histogram_diff.csv", diff_head, diff_rows)
    rel_l2 = {key: float(np.concatenate(v).mean()) for key, v in rel.items()}
    write_csv(
        run.reports / "relative_l2.csv",
        ["model", "relative_l2", "rmse_global"],
        [[key[1:] if key != "ensemble" else "ensemble", rel_l2[key], float(np.sqrt(sse[key].sum() / (q * mask.n_ocean)))] for key in keys],
    )
    mae = abs_err / q
    ale_std = np.sqrt(ale_sum / q)
    epi_std = np.sqrt(epi_sum / q)
    _write_fields(run, mask, {"epistemic_std": epi_std, "aleatoric_std": ale_std, "mae": mae})
    summary = {
        "task": "reconstruct",
        "members": ids,
        "n_test": q,
        "sensors": len(sensors),
        "relative_l2_ensemble": rel_l2["ensemble"],
        "relative_l2_members": {key: rel_l2[key] for key in keys[1:]},
        "histogram_low_quartile_net": low_q,
        "mae_aleatoric_correlation": metrics.pearson(mae, ale_std),
        "mae_epistemic_correlation": metrics.pearson(mae, epi_std),
    }
    return _dump_metrics(run, summary)
