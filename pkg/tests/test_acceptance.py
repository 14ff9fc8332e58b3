"""End-to-end acceptance criteria A1-A10.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion is still reported.
"""
import math
import time

import numpy as np
import pytest

from conftest import record
from benign_lab import diagnostics as dg
from benign_lab.experiment.config import RunConfig, SweepGrid
from benign_lab.experiment.plots import emit_plots
from benign_lab.experiment.runner import execute
from benign_lab.experiment.sweep import run_sweep
from benign_lab.mixture_data import MixtureSpec, check_sample_facts, corrupt_labels, sample_clean
from benign_lab.objective import loss_gradient, loss_snapshot
from benign_lab.oracle import _instance, finite_diff_loss_gradient
from benign_lab.shallow_net import ActivationSpec, NetParams, init_params, signs_to_a

A2_CFG = RunConfig()


@pytest.fixture(scope="module")
def a2_run():
    t = time.perf_counter()
    res = execute(A2_CFG)
    res.wall = time.perf_counter() - t
    return res


def test_a1_gradient_oracle():
    t = time.perf_counter()
    worst = 0.0
    ok = True
    for s in range(20):
        params, ds = _instance(s)
        _, v = finite_diff_loss_gradient(params, ds, h=1e-5, tol=1e-6)
        worst = max(worst, v.max_rel_err)
        ok &= v.passed
    dt = time.perf_counter() - t
    passed = ok and worst <= 1e-6 and dt < 5.0
    record("A1", passed, f"max rel err {worst:.2e}, {dt:.2f} s")
    assert passed


def test_a2_benign_overfitting(a2_run):
    s = a2_run.summary
    te = s["test_error"]
    passed = (s["stop_reason"] == "target" and s["interpolation"]
              and s["final"]["train_err"] == 0.0 and len(s["noisy_indices"]) == 3
              and 0.07 <= te <= 0.15 and a2_run.wall < 300)
    record("A2", passed, f"train err {s['final']['train_err']}, test err {te:.4f} "
                         f"(n_test {s['generalization']['n_test']}), {s['steps']} steps, "
                         f"{a2_run.wall:.1f} s")
    assert passed
    assert s["generalization"]["n_test"] == 20000
    assert s["final"]["train_loss"] <= 1 / 64


def test_a3_loss_ratio(a2_run):
    lr = a2_run.summary["loss_ratio"]
    passed = lr["max_sigmoid"] <= 25 and lr["max_over_step1"] <= 5
    record("A3", passed, f"max ratio {lr['max_sigmoid']:.3f}, "
                         f"{lr['max_over_step1']:.3f}x its step-1 value")
    ratios = np.exp(a2_run.trajectory.column("log_sig_ratio"))
    assert np.all(np.isfinite(ratios))
    assert passed


def test_a4_margin_monotone(a2_run):
    chk = dg.check_margin_monotonicity(a2_run.trajectory, tol=1e-9, start=1)
    record("A4", chk.passed, f"{len(chk.violations)} violations, "
                             f"min increment {chk.detail['min_increment']:.3e}")
    assert chk.passed


def test_a5_weight_travel():
    cfg = RunConfig().with_values(
        data__n=16, data__p=2048, data__mu_norm_sq=100.0, train__alpha_rule="theory",
        network__omega_rule="theory", train__stop="fixed", train__max_iter=1,
        diagnostics__n_test=500, diagnostics__exp_ratio_check=False)
    floor = 0.5 * 10.0 / 48
    ratios = []
    for s in range(20):
        c = cfg.with_values(seeds__data=s, seeds__noise=s, seeds__init=s, seeds__signs=s)
        res = execute(c, with_files=False)
        assert res.summary["assumptions"]["all_passed"], s
        ratios.append(res.summary["travel_ratio"])
    hits = sum(r >= floor for r in ratios)
    passed = hits >= 18
    record("A5", passed, f"{hits}/20 seeds above {floor:.4f}, "
                         f"ratio range [{min(ratios):.3f}, {max(ratios):.3f}]")
    assert passed


def test_a6_structural_inequalities():
    r = np.random.default_rng(2024)
    tol = 1e-9
    bad = {"residual": 0, "grad_cap": 0, "sandwich": 0, "xi": 0}

    # loss-gradient cap on a fixed dataset with its measured constant
    spec = MixtureSpec.gaussian(2048, 64.0, 0.1, "fixed-count")
    ds = corrupt_labels(sample_clean(spec, 32, 7), spec, 7)
    C1 = check_sample_facts(ds, spec, 0.05, 10.0, 0.1).min_C1
    act_fixed = ActivationSpec(0.5, 2.0)

    for k in range(1000):
        m, p = int(r.integers(1, 33)), int(r.integers(1, 41))
        act = ActivationSpec(r.uniform(0.05, 1.0), 10 ** r.uniform(-1, 2))
        a = signs_to_a(r.choice([-1, 1], size=m))
        scale = 10 ** r.uniform(-2, 1)
        W, V = r.normal(scale=scale, size=(m, p)), r.normal(scale=scale, size=(m, p))
        x, x2 = r.normal(scale=10 ** r.uniform(-1, 1), size=(2, p))
        resid, bound = dg.smoothness_residual(W, V, x, act, a)
        bad["residual"] += resid > bound + tol
        lo, mid, hi = dg.grad_norm_sandwich(NetParams(W, a, act), x)
        bad["sandwich"] += not (lo - tol <= mid <= hi + tol)
        xi = dg.xi_coefficient(NetParams(W, a, act), x, x2)
        bad["xi"] += not (act.gamma ** 2 - tol <= xi <= 1 + tol)

        pw = init_params(8, 2048, 10 ** r.uniform(-4, 0), act_fixed, k)
        g = np.linalg.norm(loss_gradient(pw, ds))
        cap = math.sqrt(C1 * 2048) * loss_snapshot(pw, ds).G
        bad["grad_cap"] += g > cap + tol

    passed = sum(bad.values()) == 0
    record("A6", passed, ", ".join(f"{k} {v}" for k, v in bad.items())
           + f" violations over 1000 triples (C1 {C1:.3f})")
    assert passed


def test_a7_sample_facts():
    spec = MixtureSpec.gaussian(16384, 64.0, 0.1, "fixed-count")
    ok, c1 = 0, []
    for s in range(100):
        ds = corrupt_labels(sample_clean(spec, 32, s), spec, s)
        rep = check_sample_facts(ds, spec, 0.05, 10.0, 0.1)
        ok += rep.all_passed
        c1.append(rep.min_C1)
    c1 = np.array(c1)
    med = float(np.median(c1))
    spread = max(c1.max() / med - 1, 1 - c1.min() / med)
    passed = ok >= 95 and spread <= 0.3
    record("A7", passed, f"{ok}/100 pass, min C1 median {med:.4f}, "
                         f"range [{c1.min():.4f}, {c1.max():.4f}] ({spread:.1%} spread)")
    assert passed


@pytest.fixture(scope="module")
def a8_grid():
    base = A2_CFG.with_values(diagnostics__n_test=5000, diagnostics__exp_ratio_check=False,
                              output__name="a8")
    return SweepGrid(base, (("mu_norm_sq", (4.0, 16.0, 64.0)), ("seed", (0, 1, 2, 3, 4))))


@pytest.fixture(scope="module")
def a8_sweep(a8_grid, tmp_path_factory):
    return run_sweep(a8_grid, workers=1, out_dir=tmp_path_factory.mktemp("a8"))


def test_a8_phase_trend(a8_sweep):
    table = sorted(a8_sweep.table, key=lambda t: t["mu_norm_sq"])
    means = [t["test_err_mean"] for t in table]
    train_ok = all(r["status"] == "ok" and r["train_err"] == 0.0 for r in a8_sweep.rows)
    monotone = all(b - a <= 0.02 for a, b in zip(means, means[1:]))
    near = abs(means[-1] - 0.1) <= 0.05
    passed = len(a8_sweep.rows) == 15 and train_ok and monotone and near
    record("A8", passed, "mean test err " + ", ".join(
        f"{t['mu_norm_sq']:g}: {t['test_err_mean']:.4f}" for t in table)
        + f"; train err 0 in all cells: {train_ok}")
    assert passed
    assert emit_plots(a8_sweep.directory)[0].endswith("phase.svg")


def test_a9_gradient_witness(a2_run):
    mu2 = A2_CFG.data.mu_norm_sq
    chk = dg.check_witness(a2_run.trajectory, 0.5, mu2, min_fraction=0.99)
    frac = chk.detail["fraction"]
    record("A9", chk.passed, f"witness bound held at {frac:.2%} of "
                             f"{len(a2_run.trajectory.records)} recorded steps")
    assert chk.passed


def test_a10_determinism(a2_run, a8_grid, a8_sweep, tmp_path):
    again = execute(A2_CFG)
    same_run = all(again.files[f] == a2_run.files[f] for f in ("trajectory.csv", "margins.csv"))
    run_sweep(a8_grid, workers=8, out_dir=tmp_path / "par")
    same_sweep = all((tmp_path / "par" / f).read_bytes()
                     == open(f"{a8_sweep.directory}/{f}", "rb").read()
                     for f in ("results.csv", "aggregate.csv"))
    passed = same_run and same_sweep
    record("A10", passed, f"A2 rerun CSV identical: {same_run}; "
                          f"sweep 1 vs 8 workers identical: {same_sweep}")
    assert passed
