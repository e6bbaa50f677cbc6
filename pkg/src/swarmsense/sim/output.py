"""Run artifacts: metrics.json, timeseries.csv and trace.log."""
from __future__ import annotations

import csv
import json
import math
import statistics
from pathlib import Path

from .world import Metrics

TIMESERIES_COLUMNS = ("time", "robot", "x", "y", "z", "energy", "decision", "phase", "docked")


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, dict keys become strings."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def metrics_document(metrics: Metrics) -> dict:
    errs = metrics.localization_errors_deg
    return _clean(
        {
            **metrics.summary_info,
            "docking_events": metrics.docking_events,
            "undocking_events": metrics.undocking_events,
            "ascent_counts": metrics.ascent_counts,
            "packets": metrics.packets,
            "echo_events": metrics.echo_events,
            "localization_errors_deg": errs,
            "median_localization_error_deg": statistics.median(errs) if errs else None,
            "distance_estimates": metrics.distance_estimates,
            "final_energy": metrics.final_energy,
        }
    )


def write_outputs(metrics: Metrics, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics_document(metrics), fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(out / "timeseries.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMESERIES_COLUMNS)
        for row in metrics.energy_trace:
            t, rid, x, y, z, e, dec, phase, docked = row
            w.writerow([f"{t:.6f}", rid, f"{x:.6f}", f"{y:.6f}", f"{z:.6f}", f"{e:.6f}", dec, phase, docked])
    with open(out / "trace.log", "w") as fh:
        for rec in metrics.trace:
            fh.write(rec.format() + "\n")
    return out
