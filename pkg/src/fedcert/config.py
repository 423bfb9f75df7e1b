"""Strict experiment configuration: JSON in, validated dataclass out.

Parsing is strict in both directions: unknown keys fail the run (so a typo
cannot silently disable an ablation), and every value is range-checked with
an error naming the field and its legal domain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

from .data import PartitionSpec, load_csv, load_idx, partition, synth_blobs
from .fed import TrainerConfig
from .pacbayes import geometric_grid

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "config_from_dict"]


class ConfigError(ValueError):
    """Raised for unknown keys or out-of-domain values in a config."""


_TOP_KEYS = {
    "dataset", "partition", "num_clients", "num_rounds", "local_steps",
    "batch_size", "learning_rate", "lambda_mode", "lambda_value",
    "lambda_grid", "delta", "loss_bound", "mc_eval_samples",
    "mc_train_samples", "prior_mode", "prior_source", "prior_sigma",
    "gibbs_temperature", "bound_n", "hidden_dims", "parallel", "run_seed",
    "output",
}
_DATASET_KEYS = {
    "synthetic": {"kind", "per_client", "dim", "num_classes", "skew", "seed"},
    "csv": {"kind", "path", "num_classes"},
    "idx": {"kind", "images", "labels"},
}
_PARTITION_KEYS = {"scheme", "ratios", "alpha", "seed"}
_GRID_KEYS = {"min", "ratio", "size"}

_PARTITION_SCHEMES = ("balanced", "unbalanced", "dirichlet", "blocks")


def _unknown(raw: dict, allowed: set, prefix: str = "") -> list:
    return [f"{prefix}{k}" for k in raw if k not in allowed]


def _reject_unknown(raw: dict, allowed: set, prefix: str = "") -> None:
    bad = sorted(_unknown(raw, allowed, prefix))
    if bad:
        raise ConfigError("unknown config keys: " + ", ".join(bad))


def _get_number(raw, key, default, *, path="", integer=False):
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}{key} must be a number, got {value!r}")
    if integer:
        if float(value) != int(value):
            raise ConfigError(f"{path}{key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _get_choice(raw, key, default, choices, *, path=""):
    value = raw.get(key, default)
    if value not in choices:
        raise ConfigError(
            f"{path}{key} must be one of {'/'.join(choices)}, got {value!r}")
    return value


def _check_range(name, value, low, high, *, open_low=False, open_high=False):
    ok = (value > low if open_low else value >= low) and \
         (value < high if open_high else value <= high)
    if not ok:
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ConfigError(
            f"{name} must lie in {lo}{low:g},{high:g}{hi}, got {value!r}")
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment description."""

    dataset: dict
    partition: dict
    num_clients: int
    num_rounds: int
    local_steps: int
    batch_size: int
    learning_rate: float
    lambda_mode: str
    lambda_value: float
    lambda_grid: dict
    delta: float
    loss_bound: float | None
    mc_eval_samples: int
    mc_train_samples: int
    prior_mode: str
    prior_source: str
    prior_sigma: float
    gibbs_temperature: str
    bound_n: str
    hidden_dims: tuple
    parallel: bool
    run_seed: int
    output: str

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def trainer_config(self) -> TrainerConfig:
        grid = geometric_grid(self.lambda_grid["min"], self.lambda_grid["ratio"],
                              self.lambda_grid["size"])
        return TrainerConfig(
            local_steps=self.local_steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lambda_mode=self.lambda_mode,
            lambda_value=self.lambda_value,
            lambda_grid=grid,
            delta=self.delta,
            loss_bound=self.loss_bound,
            mc_eval_samples=self.mc_eval_samples,
            mc_train_samples=self.mc_train_samples,
            prior_mode=self.prior_mode,
            prior_source=self.prior_source,
            prior_sigma=self.prior_sigma,
            bound_n=self.bound_n,
            hidden_dims=self.hidden_dims,
            parallel=self.parallel,
        )

    def build_problem(self):
        """Materialize the dataset and its client partition."""
        d = self.dataset
        scheme = self.partition["scheme"]
        if d["kind"] == "synthetic":
            seed = d.get("seed", self.run_seed)
            ds, blocks = synth_blobs(self.num_clients, d["per_client"], d["dim"],
                                     d["num_classes"], d["skew"], seed)
            if scheme == "blocks":
                return ds, blocks
        else:
            if scheme == "blocks":
                raise ConfigError(
                    "partition.scheme 'blocks' is only valid for synthetic data")
            if d["kind"] == "csv":
                ds = load_csv(d["path"], d.get("num_classes"))
            else:
                ds = load_idx(d["images"], d["labels"])
        spec = PartitionSpec(
            scheme=scheme,
            num_clients=self.num_clients,
            seed=self.partition.get("seed", self.run_seed),
            ratios=self.partition.get("ratios"),
            alpha=self.partition.get("alpha"),
        )
        return ds, partition(ds, spec)


def _parse_dataset(raw, path="dataset.") -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("dataset must be an object")
    kind = _get_choice(raw, "kind", None, ("synthetic", "csv", "idx"), path=path)
    _reject_unknown(raw, _DATASET_KEYS[kind], path)
    out = {"kind": kind}
    if kind == "synthetic":
        out["per_client"] = _check_range(
            path + "per_client",
            _get_number(raw, "per_client", None, path=path, integer=True),
            1, math.inf)
        out["dim"] = _check_range(
            path + "dim", _get_number(raw, "dim", None, path=path, integer=True),
            1, math.inf)
        out["num_classes"] = _check_range(
            path + "num_classes",
            _get_number(raw, "num_classes", None, path=path, integer=True),
            2, math.inf)
        out["skew"] = _check_range(
            path + "skew", _get_number(raw, "skew", 0.0, path=path), 0.0, 1.0)
        if "seed" in raw:
            out["seed"] = _check_range(
                path + "seed", _get_number(raw, "seed", None, path=path, integer=True),
                0, math.inf)
    elif kind == "csv":
        if not isinstance(raw.get("path"), str):
            raise ConfigError(f"{path}path must be a string")
        out["path"] = raw["path"]
        if "num_classes" in raw:
            out["num_classes"] = _check_range(
                path + "num_classes",
                _get_number(raw, "num_classes", None, path=path, integer=True),
                2, math.inf)
    else:
        for key in ("images", "labels"):
            if not isinstance(raw.get(key), str):
                raise ConfigError(f"{path}{key} must be a string")
            out[key] = raw[key]
    return out


def _parse_partition(raw, path="partition.") -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("partition must be an object")
    _reject_unknown(raw, _PARTITION_KEYS, path)
    scheme = _get_choice(raw, "scheme", None, _PARTITION_SCHEMES, path=path)
    out = {"scheme": scheme}
    if "ratios" in raw:
        ratios = raw["ratios"]
        if (not isinstance(ratios, list) or not ratios
                or not all(isinstance(r, (int, float)) and not isinstance(r, bool)
                           for r in ratios)):
            raise ConfigError(f"{path}ratios must be a nonempty list of numbers")
        out["ratios"] = tuple(float(r) for r in ratios)
    if "alpha" in raw:
        out["alpha"] = _check_range(
            path + "alpha", _get_number(raw, "alpha", None, path=path),
            0.0, math.inf, open_low=True)
    if "seed" in raw:
        out["seed"] = _check_range(
            path + "seed", _get_number(raw, "seed", None, path=path, integer=True),
            0, math.inf)
    if scheme == "unbalanced" and "ratios" not in out:
        raise ConfigError(f"{path}ratios is required for the unbalanced scheme")
    if scheme == "dirichlet" and "alpha" not in out:
        raise ConfigError(f"{path}alpha is required for the dirichlet scheme")
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS)
    if "dataset" not in raw:
        raise ConfigError("dataset is required")
    if "partition" not in raw:
        raise ConfigError("partition is required")

    grid_raw = raw.get("lambda_grid", {})
    if not isinstance(grid_raw, dict):
        raise ConfigError("lambda_grid must be an object")
    _reject_unknown(grid_raw, _GRID_KEYS, "lambda_grid.")
    grid = {
        "min": _check_range(
            "lambda_grid.min", _get_number(grid_raw, "min", 1.0, path="lambda_grid."),
            0.0, math.inf, open_low=True),
        "ratio": _check_range(
            "lambda_grid.ratio",
            _get_number(grid_raw, "ratio", math.sqrt(2.0), path="lambda_grid."),
            1.0, math.inf, open_low=True),
        "size": _check_range(
            "lambda_grid.size",
            _get_number(grid_raw, "size", 32, path="lambda_grid.", integer=True),
            1, math.inf),
    }

    hidden = raw.get("hidden_dims", [32])
    if (not isinstance(hidden, list)
            or not all(isinstance(h, int) and not isinstance(h, bool) and h >= 1
                       for h in hidden)):
        raise ConfigError("hidden_dims must be a list of positive integers")

    parallel = raw.get("parallel", False)
    if not isinstance(parallel, bool):
        raise ConfigError(f"parallel must be a boolean, got {parallel!r}")

    output = raw.get("output", "run.jsonl")
    if not isinstance(output, str) or not output:
        raise ConfigError("output must be a nonempty string")

    loss_bound = raw.get("loss_bound")
    if loss_bound is not None:
        loss_bound = _check_range(
            "loss_bound", _get_number(raw, "loss_bound", None),
            0.0, math.inf, open_low=True)

    cfg = ExperimentConfig(
        dataset=_parse_dataset(raw["dataset"]),
        partition=_parse_partition(raw["partition"]),
        num_clients=_check_range(
            "num_clients", _get_number(raw, "num_clients", None, integer=True),
            1, math.inf),
        num_rounds=_check_range(
            "num_rounds", _get_number(raw, "num_rounds", 10, integer=True),
            1, math.inf),
        local_steps=_check_range(
            "local_steps", _get_number(raw, "local_steps", 50, integer=True),
            1, math.inf),
        batch_size=_check_range(
            "batch_size", _get_number(raw, "batch_size", 32, integer=True),
            1, math.inf),
        learning_rate=_check_range(
            "learning_rate", _get_number(raw, "learning_rate", 1e-3),
            0.0, math.inf),
        lambda_mode=_get_choice(raw, "lambda_mode", "fixed", ("fixed", "auto")),
        lambda_value=_check_range(
            "lambda_value", _get_number(raw, "lambda_value", 100.0),
            0.0, math.inf, open_low=True),
        lambda_grid=grid,
        delta=_check_range(
            "delta", _get_number(raw, "delta", 0.05), 0.0, 1.0,
            open_low=True, open_high=True),
        loss_bound=loss_bound,
        mc_eval_samples=_check_range(
            "mc_eval_samples", _get_number(raw, "mc_eval_samples", 32, integer=True),
            1, math.inf),
        mc_train_samples=_check_range(
            "mc_train_samples", _get_number(raw, "mc_train_samples", 1, integer=True),
            1, math.inf),
        prior_mode=_get_choice(raw, "prior_mode", "data_dependent",
                               ("data_dependent", "data_independent")),
        prior_source=_get_choice(raw, "prior_source", "global",
                                 ("global", "local_posterior")),
        prior_sigma=_check_range(
            "prior_sigma", _get_number(raw, "prior_sigma", 0.1),
            0.0, math.inf, open_low=True),
        gibbs_temperature=_get_choice(raw, "gibbs_temperature", "objective",
                                      ("objective", "plain")),
        bound_n=_get_choice(raw, "bound_n", "min", ("min", "mean")),
        hidden_dims=tuple(hidden),
        parallel=parallel,
        run_seed=_check_range(
            "run_seed", _get_number(raw, "run_seed", 0, integer=True),
            0, math.inf),
        output=output,
    )

    if cfg.partition["scheme"] == "unbalanced" \
            and len(cfg.partition["ratios"]) != cfg.num_clients:
        raise ConfigError(
            f"partition.ratios has {len(cfg.partition['ratios'])} entries "
            f"but num_clients is {cfg.num_clients}")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(raw)
