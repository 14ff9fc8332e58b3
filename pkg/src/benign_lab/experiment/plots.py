"""SVG figures for run and sweep directories.

Run directory: ``loss_ratio.svg`` (sigmoid loss ratio and G_hat vs step,
with the C_r line) and ``margins.svg`` (per-sample margins, noisy points
highlighted).  Sweep directory: ``phase.svg`` (test error vs
``n |mu|^4 / p`` with the test-error bound curve).
"""

import json
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..errors import ConfigurationError  # noqa: E402
from .sweep import read_csv  # noqa: E402


class MissingColumnsError(ConfigurationError):
    def __init__(self, path, missing):
        super().__init__(f"{path}: missing column(s) {', '.join(missing)}")
        self.missing = list(missing)


_RC = {"svg.hashsalt": "benign-lab", "svg.fonttype": "none"}


def _require(path, rows, header, needed):
    missing = [c for c in needed if c not in header]
    if missing:
        raise MissingColumnsError(path, missing)


def _header(path):
    with open(path) as fh:
        for ln in fh:
            if not ln.startswith("#"):
                return ln.strip().split(",")
    return []


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _empty(ax, msg):
    ax.text(0.5, 0.5, msg, transform=ax.transAxes, ha="center", va="center",
            color="tab:red")


def plot_loss_ratio(run_dir):
    path = os.path.join(run_dir, "trajectory.csv")
    header = _header(path)
    rows = read_csv(path)
    _require(path, rows, header, ("step", "loss_ratio_sig", "G_hat"))
    C_r = None
    summ = os.path.join(run_dir, "summary.json")
    if os.path.exists(summ):
        with open(summ) as fh:
            C_r = json.load(fh).get("resolved", {}).get("C_r")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        if not rows:
            _empty(ax, "warning: empty trajectory")
        else:
            t = np.array([float(r["step"]) for r in rows])
            ax.plot(t, [float(r["loss_ratio_sig"]) for r in rows], label="max g_i / g_j")
            ax.plot(t, [float(r["G_hat"]) for r in rows], label="G_hat")
            if C_r is not None:
                ax.axhline(float(C_r), color="k", ls="--", lw=1, label=f"C_r = {float(C_r):.3g}")
            ax.set_yscale("log")
            ax.legend()
        ax.set_xlabel("step")
        ax.set_title("loss ratio and G_hat")
        return _save(fig, os.path.join(run_dir, "loss_ratio.svg"))


def plot_margins(run_dir):
    path = os.path.join(run_dir, "margins.csv")
    noisy = set()
    with open(path) as fh:
        for ln in fh:
            if ln.startswith("# noisy="):
                noisy = {int(s) for s in ln.split("=", 1)[1].split()}
    header = _header(path)
    rows = read_csv(path)
    _require(path, rows, header, ("step",))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        cols = [c for c in header if c.startswith("m")]
        if not rows or not cols:
            _empty(ax, "warning: empty trajectory")
        else:
            t = np.array([float(r["step"]) for r in rows])
            for c in cols:
                k = int(c[1:])
                bad = k in noisy
                ax.plot(t, [float(r[c]) for r in rows], lw=1.5 if bad else 0.6,
                        color="tab:red" if bad else "tab:blue", alpha=1.0 if bad else 0.5)
            ax.plot([], [], color="tab:blue", label="clean")
            ax.plot([], [], color="tab:red", label="noisy")
            ax.axhline(0.0, color="k", lw=0.5)
            ax.legend()
        ax.set_xlabel("step")
        ax.set_ylabel("y_k f(x_k; W)")
        ax.set_title("training margins")
        return _save(fig, os.path.join(run_dir, "margins.svg"))


def plot_phase(sweep_dir):
    path = os.path.join(sweep_dir, "aggregate.csv")
    header = _header(path)
    rows = read_csv(path)
    _require(path, rows, header, ("signal", "test_err_mean"))
    with open(os.path.join(sweep_dir, "sweep.json")) as fh:
        meta = json.load(fh)
    eta, C = float(meta["eta"]), float(meta["C"])
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        pts = sorted((float(r["signal"]), float(r["test_err_mean"]),
                      float(r.get("test_err_std", "nan"))) for r in rows)
        if not pts:
            _empty(ax, "warning: no sweep results")
        else:
            s = np.array([q[0] for q in pts])
            ax.errorbar(s, [q[1] for q in pts], yerr=[q[2] for q in pts], marker="o",
                        capsize=3, label="test error")
            grid = np.geomspace(max(s.min() / 2, 1e-3), s.max() * 2, 200)
            # the bound depends on (n, |mu|, p) only through the signal
            ax.plot(grid, [min(1.0, eta + 2.0 * math.exp(-g / C)) for g in grid],
                    "k--", lw=1, label=f"eta + 2 exp(-s/C), C={C:g}")
            ax.axhline(eta, color="gray", lw=0.5, label="eta")
            ax.set_xscale("log")
            ax.legend()
        ax.set_xlabel("n |mu|^4 / p")
        ax.set_ylabel("test error")
        ax.set_title("test error vs signal strength")
        return _save(fig, os.path.join(sweep_dir, "phase.svg"))


def emit_plots(directory):
    """Write the figures appropriate for a run or sweep directory and
    return their paths."""
    if os.path.exists(os.path.join(directory, "aggregate.csv")):
        return [plot_phase(directory)]
    if os.path.exists(os.path.join(directory, "trajectory.csv")):
        out = [plot_loss_ratio(directory)]
        if os.path.exists(os.path.join(directory, "margins.csv")):
            out.append(plot_margins(directory))
        return out
    raise ConfigurationError(f"{directory}: no trajectory.csv or aggregate.csv found")
