"""Machine-readable run output: JSONL round streams and sweep CSV tables.

Every round record carries the full metric field set; the validator below
is applied on write and is available to downstream consumers, so a schema
drift fails loudly instead of producing holey files. Serialization is
canonical (sorted keys, ``repr`` floats, no NaN), which makes determinism
checks a plain byte comparison.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .fed import RoundMetrics

__all__ = [
    "ROUND_FIELDS",
    "PER_CLIENT_FIELDS",
    "SUMMARY_FIELDS",
    "round_record",
    "summary_record",
    "validate_record",
    "write_jsonl",
    "write_sweep_csv",
]

ROUND_FIELDS = (
    "round", "lambda_used", "train_risk", "test_risk", "gen_gap", "kl_sum",
    "complexity_t1", "complexity_cor", "bound_t1", "bound_cor", "holds_t1",
    "holds_cor", "global_test_accuracy", "per_client",
)
PER_CLIENT_FIELDS = (
    "id", "n_train", "n_test", "weight", "train_risk", "test_risk", "kl",
    "objective",
)
SUMMARY_FIELDS = (
    "num_rounds", "best_global_test_accuracy", "final_global_test_accuracy",
    "final_train_risk", "final_test_risk", "final_gen_gap", "final_kl_sum",
    "final_lambda_used", "final_complexity_t1", "final_complexity_cor",
    "final_bound_t1", "final_bound_cor", "final_holds_t1", "final_holds_cor",
)


def round_record(metrics: RoundMetrics) -> dict:
    return {"record": "round", **metrics.to_dict()}


def summary_record(history) -> dict:
    """Condense a run's history into its final summary line."""
    if not history:
        raise ValueError("cannot summarize an empty run")
    final = history[-1]
    return {
        "record": "summary",
        "num_rounds": len(history),
        "best_global_test_accuracy": max(m.global_test_accuracy for m in history),
        "final_global_test_accuracy": final.global_test_accuracy,
        "final_train_risk": final.train_risk,
        "final_test_risk": final.test_risk,
        "final_gen_gap": final.gen_gap,
        "final_kl_sum": final.kl_sum,
        "final_lambda_used": final.lambda_used,
        "final_complexity_t1": final.complexity_t1,
        "final_complexity_cor": final.complexity_cor,
        "final_bound_t1": final.bound_t1,
        "final_bound_cor": final.bound_cor,
        "final_holds_t1": final.holds_t1,
        "final_holds_cor": final.holds_cor,
    }


def validate_record(rec: dict) -> dict:
    """Check a record against the schema; returns it unchanged if valid."""
    kind = rec.get("record")
    if kind == "round":
        required = set(ROUND_FIELDS)
        missing = required - set(rec)
        extra = set(rec) - required - {"record"}
        if missing or extra:
            raise ValueError(
                f"round record schema violation: missing={sorted(missing)}, "
                f"unexpected={sorted(extra)}")
        for sub in rec["per_client"]:
            sub_missing = set(PER_CLIENT_FIELDS) - set(sub)
            if sub_missing:
                raise ValueError(
                    f"per_client record missing fields: {sorted(sub_missing)}")
    elif kind == "summary":
        missing = set(SUMMARY_FIELDS) - set(rec)
        if missing:
            raise ValueError(f"summary record missing fields: {sorted(missing)}")
    else:
        raise ValueError(f"unknown record type {kind!r}")
    return rec


def write_jsonl(path, records) -> None:
    """Write validated records, one canonical JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            validate_record(rec)
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def write_sweep_csv(path, axis: str, rows) -> None:
    """Comparison table for a sweep: one row per axis value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = [axis, "run_seed", *SUMMARY_FIELDS]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for value, seed, summary in rows:
            row = {k: summary[k] for k in SUMMARY_FIELDS}
            row[axis] = value
            row["run_seed"] = seed
            writer.writerow(row)
