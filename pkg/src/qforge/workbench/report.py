"""Run reports: summary statistics, CSV/JSON emission, re-aggregation.

Statistics convention: population standard deviation; quartiles by linear
interpolation.  Reported summaries are always recomputable from the
persisted per-state fidelity lists (``reaggregate`` does exactly that).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUMMARY_KEYS = ("mean", "std", "q1", "median", "q3", "n")


@dataclass
class RunReport:
    experiment: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    per_state: dict[str, list[float]] = field(default_factory=dict)
    extra_tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    wall_time: float = 0.0


def summarize(values) -> dict:
    """Mean, population std, and linearly interpolated quartiles."""
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise ValueError("cannot summarize an empty value list")
    q1, median, q3 = np.percentile(a, [25, 50, 75], method="linear")
    return {
        "mean": float(a.mean()),
        "std": float(a.std()),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "n": int(a.size),
    }


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def emit_report(report: RunReport, out_dir) -> dict[str, Path]:
    """Write one CSV per table, the per-state fidelities, and a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    if report.rows:
        header = list(report.rows[0].keys())
        path = out / f"{report.experiment}.csv"
        _write_csv(path, header, ([row[k] for k in header] for row in report.rows))
        written["summary"] = path

    if report.per_state:
        path = out / f"{report.experiment}_per_state.csv"
        rows = (
            [label, i, v]
            for label, values in report.per_state.items()
            for i, v in enumerate(values)
        )
        _write_csv(path, ["condition", "index", "fidelity"], rows)
        written["per_state"] = path

    for name, (header, rows) in report.extra_tables.items():
        path = out / f"{report.experiment}_{name}.csv"
        _write_csv(path, header, rows)
        written[name] = path

    manifest = {
        "experiment": report.experiment,
        "config": report.config,
        "seed": report.config.get("seed"),
        "config_hash": _hash_config(report.config),
        "wall_time_s": report.wall_time,
        "created_unix": int(time.time()),
        "files": {k: p.name for k, p in written.items()},
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    written["manifest"] = manifest_path
    return written


def _hash_config(config: dict) -> str:
    import hashlib

    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def reaggregate(run_dir) -> list[dict]:
    """Recompute summary statistics from a persisted per-state CSV.

    Independent of the experiment code path; used to audit emitted reports.
    """
    run = Path(run_dir)
    candidates = sorted(run.glob("*_per_state.csv"))
    if not candidates:
        raise FileNotFoundError(f"no *_per_state.csv under {run}")
    rows = []
    for path in candidates:
        by_label: dict[str, list[float]] = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                by_label.setdefault(rec["condition"], []).append(float(rec["fidelity"]))
        for label, values in by_label.items():
            rows.append({"condition": label, **summarize(values)})
    return rows
