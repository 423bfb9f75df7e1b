"""Command-line experiment runner.

``fedcert run --config cfg.json`` executes one federated run and streams
round records plus a summary to a JSONL file. ``fedcert sweep`` repeats the
run along one ablation axis (client count, prior mode, or partition scheme)
and writes a combined comparison CSV.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .fed import FederatedSimulation
from .reporting import round_record, summary_record, write_jsonl, write_sweep_csv

__all__ = ["main"]

_SWEEP_AXES = ("clients", "prior_mode", "partition_scheme")


def _resolve_output(cfg: ExperimentConfig, output_dir: str | None) -> Path:
    out = Path(cfg.output)
    if output_dir is not None and not out.is_absolute():
        out = Path(output_dir) / out
    return out


def _execute_run(cfg: ExperimentConfig, out_path: Path) -> dict:
    """Run one experiment and write its JSONL stream; returns the summary."""
    start = time.perf_counter()
    ds, part = cfg.build_problem()
    sim = FederatedSimulation(ds, part, cfg.trainer_config(), run_seed=cfg.run_seed)
    history = sim.run(cfg.num_rounds)
    records = [round_record(m) for m in history]
    summary = summary_record(history)
    write_jsonl(out_path, records + [summary])
    elapsed = time.perf_counter() - start
    print(f"wrote {len(records) + 1} records to {out_path} "
          f"({elapsed:.2f}s wall clock)", file=sys.stderr)
    return summary


def _apply_axis(cfg: ExperimentConfig, axis: str, value: str) -> ExperimentConfig:
    if axis == "clients":
        try:
            k = int(value)
        except ValueError:
            raise ConfigError(f"clients axis values must be integers, got {value!r}")
        if k < 1:
            raise ConfigError(f"clients axis values must be positive, got {k}")
        return cfg.with_overrides(num_clients=k)
    if axis == "prior_mode":
        if value not in ("data_dependent", "data_independent"):
            raise ConfigError(
                f"prior_mode axis values must be data_dependent or "
                f"data_independent, got {value!r}")
        return cfg.with_overrides(prior_mode=value)
    # partition_scheme
    if value not in ("balanced", "unbalanced", "dirichlet", "blocks"):
        raise ConfigError(f"unknown partition scheme {value!r}")
    new_part = dict(cfg.partition)
    new_part["scheme"] = value
    if value == "unbalanced" and "ratios" not in new_part:
        raise ConfigError("partition.ratios is required to sweep over the "
                          "unbalanced scheme")
    if value == "dirichlet" and "alpha" not in new_part:
        raise ConfigError("partition.alpha is required to sweep over the "
                          "dirichlet scheme")
    return cfg.with_overrides(partition=new_part)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(run_seed=args.seed)
    _execute_run(cfg, _resolve_output(cfg, args.output_dir))
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(run_seed=args.seed)
    values = [v for v in (s.strip() for s in args.values.split(",")) if v]
    if not values:
        raise ConfigError("sweep requires a nonempty --values list")

    base_out = _resolve_output(cfg, args.output_dir)
    rows = []
    for i, value in enumerate(values):
        point = _apply_axis(cfg, args.axis, value)
        point = point.with_overrides(run_seed=cfg.run_seed + i)
        out_path = base_out.with_name(
            f"{base_out.stem}__{args.axis}_{value}{base_out.suffix or '.jsonl'}")
        summary = _execute_run(point, out_path)
        rows.append((value, point.run_seed, summary))

    csv_path = base_out.with_name(f"{base_out.stem}__{args.axis}_sweep.csv")
    write_sweep_csv(csv_path, args.axis, rows)
    print(f"wrote sweep table to {csv_path}", file=sys.stderr)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedcert",
        description="Federated mean-field Gaussian training with per-round "
                    "generalization-bound certificates.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one experiment")
    run.add_argument("--config", required=True, help="path to a JSON config")
    run.add_argument("--output-dir", default=None,
                     help="directory for relative output paths")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config run_seed")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="run one experiment per axis value")
    sweep.add_argument("--config", required=True, help="path to a JSON config")
    sweep.add_argument("--axis", required=True, choices=_SWEEP_AXES)
    sweep.add_argument("--values", required=True,
                       help="comma-separated axis values")
    sweep.add_argument("--output-dir", default=None,
                       help="directory for relative output paths")
    sweep.add_argument("--seed", type=int, default=None,
                       help="override the config run_seed")
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fedcert: config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"fedcert: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
