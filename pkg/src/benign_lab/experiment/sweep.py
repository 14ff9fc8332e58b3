"""Parameter sweeps: one run per (cell, repetition), then aggregation.

Cells are independent.  Workers return rows and per-cell files to the
coordinator, which writes everything, so results do not depend on the
worker count or on completion order.
"""

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..errors import ConfigurationError
from .config import serialize_sweep_config
from .runner import _write, ensure_selftest, execute

ROW_COLUMNS = ("cell", "rep", "n", "p", "mu_norm_sq", "eta", "alpha", "m", "seed",
               "signal", "status", "steps", "train_err", "train_loss", "test_err",
               "max_loss_ratio", "norm_margin", "travel_ratio", "error_bound",
               "slack_A1", "slack_A2", "slack_A3", "slack_A4", "slack_A5", "slack_A6",
               "error")
AGG_METRICS = ("train_err", "train_loss", "test_err", "max_loss_ratio", "norm_margin",
               "travel_ratio")


def _cell_row(cell, rep, cfg):
    d = cfg.data
    row = {"cell": cell, "rep": rep, "n": d.n, "p": d.p, "mu_norm_sq": d.mu_norm_sq,
           "eta": d.eta, "alpha": cfg.resolved_alpha(), "m": cfg.network.m,
           "seed": cfg.seeds.data, "signal": d.n * d.mu_norm_sq ** 2 / d.p}
    try:
        res = execute(cfg, with_files=True)
    except Exception as exc:          # recorded, sweep continues
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row, {}
    s = res.summary
    row.update(status="ok", error="", steps=s["steps"], train_err=s["final"]["train_err"],
               train_loss=s["final"]["train_loss"], test_err=s["test_error"],
               max_loss_ratio=s["loss_ratio"]["max_sigmoid"],
               norm_margin=s["generalization"]["normalized_margin"],
               travel_ratio=s["travel_ratio"],
               error_bound=s["generalization"]["error_bound"])
    for k, chk in s["assumptions"]["checks"].items():
        row[f"slack_{k}"] = chk["slack"]
    return row, res.files


def _job(args):
    return _cell_row(*args)


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_csv(rows, columns):
    out = io.StringIO()
    out.write("# format_version=1\n")
    out.write(",".join(columns) + "\n")
    for r in rows:
        out.write(",".join(_fmt(r.get(c)) for c in columns) + "\n")
    return out.getvalue()


def aggregate(rows, axis_names):
    """Mean and standard deviation over successful runs sharing the same
    non-seed axis values; a seed axis pools like repetitions."""
    keys = [a for a in axis_names if a != "seed"]
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[a] for a in keys), []).append(r)
    out = []
    for k, group in enumerate(groups.values()):
        ok = [r for r in group if r["status"] == "ok"]
        agg = {"cell": k, "runs": len(group), "ok": len(ok), "signal": group[0]["signal"]}
        for a in keys:
            agg[a] = group[0][a]
        for k in AGG_METRICS:
            vals = np.array([r[k] for r in ok], dtype=np.float64)
            agg[f"{k}_mean"] = float(vals.mean()) if vals.size else math.nan
            agg[f"{k}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0 \
                if vals.size else math.nan
        tb = [r["error_bound"] for r in ok]
        agg["error_bound"] = tb[0] if tb else math.nan
        out.append(agg)
    return out


class SweepResult:
    def __init__(self, rows, table, directory):
        self.rows = rows
        self.table = table
        self.directory = directory


def run_sweep(grid, workers=None, out_dir=None, check=True, keep_runs=True):
    """Run every (cell, repetition) of ``grid`` and write the aggregate table.

    ``results.csv`` has one row per run and ``aggregate.csv`` one per cell.
    Per-run files go to ``runs/cell<k>_rep<r>/`` when ``keep_runs``.
    """
    grid.validate()
    workers = grid.workers if workers is None else workers
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    if check:
        ensure_selftest()
    jobs = [(cell, rep, grid.cell_config(vals, rep))
            for cell, vals in grid.cells() for rep in range(grid.reps)]
    if workers == 1:
        results = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_job, jobs))
    rows = [r for r, _ in results]
    axis_names = [a for a, _ in grid.axes]
    table = aggregate(rows, axis_names)

    out = os.path.abspath(out_dir) if out_dir else grid.base.output.resolve()
    os.makedirs(out, exist_ok=True)
    if keep_runs:
        for (cell, rep, _), (_, files) in zip(jobs, results):
            d = os.path.join(out, "runs", f"cell{cell}_rep{rep}")
            os.makedirs(d, exist_ok=True)
            for name, text in files.items():
                _write(os.path.join(d, name), text)
    agg_cols = list(table[0].keys()) if table else ["cell"]
    _write(os.path.join(out, "sweep.ini"), serialize_sweep_config(grid))
    _write(os.path.join(out, "results.csv"), rows_csv(rows, ROW_COLUMNS))
    _write(os.path.join(out, "aggregate.csv"), rows_csv(table, agg_cols))
    meta = {"C": grid.base.diagnostics.C, "eta": grid.base.data.eta,
            "axes": [[a, list(v)] for a, v in grid.axes], "reps": grid.reps,
            "failed": sum(r["status"] != "ok" for r in rows)}
    _write(os.path.join(out, "sweep.json"), json.dumps(meta, indent=2) + "\n")
    return SweepResult(rows, table, out)


def read_csv(path):
    """Rows of a version-1 CSV as dicts of strings; comment lines skipped."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
