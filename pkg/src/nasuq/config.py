"""Run configuration: parsing, validation and the on-disk snapshot."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import yaml

from .errors import ConfigError
from .hpo import LIARS, HyperSpace
from .nn.optim import OPTIMIZERS
from .search import SearchConfig

TASKS = ("synthetic", "forecast", "reconstruct")

DEFAULTS = {
    "task": "synthetic",
    "output_dir": "run",
    "seed": 0,
    "data": {"snapshots": None, "mask": None},
    "space": {"num_nodes": 5, "widths": [16, 32, 64, 128, 256], "activations": ["relu", "tanh"]},
    "hyperspace": {"lr_min": 1e-4, "lr_max": 1e-1, "batch_min": 32, "batch_max": 256, "optimizers": list(OPTIMIZERS)},
    "bo": {"kappa": 1.96, "liar": "mean", "pool_size": 512, "length_scale": 0.3, "jitter": 1e-6},
    "search": {"population_size": 32, "sample_size": 8, "workers": 1, "max_evals": 50, "max_seconds": None, "executor": "auto"},
    "training": {"max_epochs": 200, "valid_fraction": 0.1, "lr_patience": 15, "lr_factor": 0.5, "early_stop_patience": 20},
    "ensemble": {"k": 10},
    "synthetic": {"n_samples": 1000, "x_range": [-1.0, 1.0], "noise": 0.3},
    "forecast": {"window": 8, "n_train": 427, "n_modes": None, "energy": 0.9, "max_modes": 50, "standardize": True, "eval_week": 8},
    "reconstruct": {"n_train": 1040, "sensors": 50, "band": [-50.0, 50.0], "sensor_seed": None},
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


class RunConfig:
    """Validated configuration tree (a plain nested dict underneath)."""

    def __init__(self, raw=None):
        self.data = _merge(DEFAULTS, raw or {})
        self.validate()

    def __getitem__(self, key):
        return self.data[key]

    @property
    def task(self):
        return self.data["task"]

    @property
    def output_dir(self):
        return Path(self.data["output_dir"])

    def validate(self):
        d = self.data
        if d["task"] not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {d['task']!r}")
        if d["task"] != "synthetic":
            for key in ("snapshots", "mask"):
                if not d["data"][key]:
                    raise ConfigError(f"task {d['task']!r} needs data.{key}")
        self.search_config()
        self.hyperspace()
        if d["bo"]["liar"] not in LIARS:
            raise ConfigError(f"bo.liar must be one of {LIARS}")
        if d["bo"]["kappa"] < 0:
            raise ConfigError("bo.kappa must be nonnegative")
        if d["ensemble"]["k"] < 1:
            raise ConfigError("ensemble.k must be >= 1")
        if not 0 < d["training"]["valid_fraction"] < 1:
            raise ConfigError("training.valid_fraction must lie in (0, 1)")
        if d["space"]["num_nodes"] < 1 or not d["space"]["widths"]:
            raise ConfigError("space needs nodes and widths")
        if d["forecast"]["window"] < 1:
            raise ConfigError("forecast.window must be positive")
        if not 1 <= d["forecast"]["eval_week"] <= d["forecast"]["window"]:
            raise ConfigError("forecast.eval_week must lie in 1..window")
        if d["reconstruct"]["sensors"] < 1:
            raise ConfigError("reconstruct.sensors must be positive")

    def search_config(self):
        s = self.data["search"]
        try:
            return SearchConfig(
                population_size=int(s["population_size"]),
                sample_size=int(s["sample_size"]),
                workers=int(s["workers"]),
                max_evals=int(s["max_evals"]),
                max_seconds=s["max_seconds"],
                seed=int(self.data["seed"]),
                executor=s["executor"],
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"search: {exc}") from exc

    def hyperspace(self):
        h = self.data["hyperspace"]
        return HyperSpace(h["lr_min"], h["lr_max"], int(h["batch_min"]), int(h["batch_max"]), tuple(h["optimizers"]))

    def with_overrides(self, **flags):
        """Apply CLI overrides (``None`` values are ignored)."""
        d = copy.deepcopy(self.data)
        if flags.get("workers") is not None:
            d["search"]["workers"] = flags["workers"]
        if flags.get("max_evals") is not None:
            d["search"]["max_evals"] = flags["max_evals"]
        if flags.get("seed") is not None:
            d["seed"] = flags["seed"]
        if flags.get("k") is not None:
            d["ensemble"]["k"] = flags["k"]
        if flags.get("output_dir") is not None:
            d["output_dir"] = str(flags["output_dir"])
        return RunConfig(d)

    def to_json(self):
        return json.dumps(self.data, indent=2, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return RunConfig(raw)
