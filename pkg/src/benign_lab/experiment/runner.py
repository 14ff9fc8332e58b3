"""Single experiment runs and their on-disk layout.

A run directory holds::

    config.ini          echo of the RunConfig (rerunnable as is)
    assumptions.txt     assumption table
    sample_facts.json   sample-event report for the training set
    trajectory.csv      per-step diagnostics, format version 1
    margins.csv         per-sample margins at recorded steps
    summary.json        final metrics and every diagnostic verdict
    params0.bnet, final.bnet, train.blab   checkpoints (optional)
"""

import hashlib
import io
import json
import math
import os
import time

import numpy as np
from threadpoolctl import threadpool_limits

from .. import diagnostics as dg
from ..assumption_gate import check_assumptions
from ..errors import ConfigurationError, DivergenceError
from ..gd_trainer import TrainConfig, train
from ..mixture_data import (MixtureSpec, check_sample_facts, corrupt_labels, sample_clean,
                            save_dataset)
from ..shallow_net import ActivationSpec, init_params, save_params
from .config import serialize_run_config

CSV_VERSION = 1
CSV_COLUMNS = ("step", "train_loss", "train_err", "G_hat", "loss_ratio_sig",
               "loss_ratio_exp_log", "grad_norm", "grad_witness", "W_fro", "norm_margin",
               "test_err", "min_margin", "max_margin")


class SelftestFailed(RuntimeError):
    pass


_SELFTEST_CACHE = {}


def build_hash():
    """Hash of the package sources; the self-test verdict is cached per hash."""
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    h = hashlib.sha256()
    for dirpath, dirnames, files in sorted(os.walk(root)):
        dirnames[:] = sorted(d for d in dirnames if d != "__pycache__")
        for f in sorted(files):
            if f.endswith(".py"):
                path = os.path.join(dirpath, f)
                h.update(os.path.relpath(path, root).encode())
                with open(path, "rb") as fh:
                    h.update(fh.read())
    return h.hexdigest()[:16]


def ensure_selftest():
    """Run the oracle self-test once per build and process; raise if it fails."""
    from ..oracle import selftest
    key = build_hash()
    if key not in _SELFTEST_CACHE:
        ok, verdicts = selftest()
        _SELFTEST_CACHE[key] = (ok, [str(v) for v in verdicts])
    ok, lines = _SELFTEST_CACHE[key]
    if not ok:
        raise SelftestFailed("self-test failed for this build:\n" + "\n".join(lines))
    return key


def build_inputs(cfg):
    """Data spec, corrupted training set and initial parameters for ``cfg``."""
    d, net, s = cfg.data, cfg.network, cfg.seeds
    variances = None if d.variance == 1.0 else np.full(d.p, d.variance)
    spec = MixtureSpec.gaussian(d.p, d.mu_norm_sq, d.eta, d.noise_policy, d.direction,
                                variances)
    ds = corrupt_labels(sample_clean(spec, d.n, s.data), spec, s.noise)
    act = ActivationSpec(net.gamma, net.H)
    params0 = init_params(net.m, d.p, cfg.resolved_omega(), act, s.init, s.signs)
    return spec, ds, params0


def _num(v):
    return repr(float(v))


def trajectory_csv(traj):
    out = io.StringIO()
    out.write(f"# format_version={CSV_VERSION}\n")
    out.write(",".join(CSV_COLUMNS) + "\n")
    for r in traj.records:
        e = r.extras
        row = (str(r.step), _num(r.loss), _num(r.train_err), _num(r.G),
               _num(r.sig_ratio), _num(r.log_exp_ratio), _num(r.grad_norm),
               _num(e.get("grad_witness", math.nan)), _num(r.W_fro),
               _num(e.get("norm_margin", math.nan)), _num(e.get("test_err", math.nan)),
               _num(r.margins.min()), _num(r.margins.max()))
        out.write(",".join(row) + "\n")
    return out.getvalue()


def margins_csv(traj, noisy):
    n = traj.records[0].margins.size if traj.records else 0
    out = io.StringIO()
    out.write(f"# format_version={CSV_VERSION}\n")
    out.write("# noisy=" + " ".join(str(int(i)) for i in noisy) + "\n")
    out.write(",".join(["step"] + [f"m{k}" for k in range(n)]) + "\n")
    for r in traj.records:
        out.write(",".join([str(r.step)] + [_num(v) for v in r.margins]) + "\n")
    return out.getvalue()


def _eval_hook(spec, tc, n_train, cfg):
    dcfg = cfg.diagnostics

    def hook(state):
        if dcfg.eval_every <= 0 or state.t % dcfg.eval_every:
            return {}
        rep = dg.generalization_stats(state.params(), spec, dcfg.n_test_trace, tc, n_train,
                                      cfg.seeds.test, dcfg.test_chunk)
        return {"norm_margin": rep.normalized_margin, "test_err": rep.test_error}

    return hook


def _write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


class RunResult:
    """In-memory outcome of ``execute``; ``run_single`` also writes it out."""

    def __init__(self, cfg, summary, traj, files):
        self.cfg = cfg
        self.summary = summary
        self.trajectory = traj
        self.files = files
        self.directory = None


def execute(cfg, with_files=True):
    """Run one configured experiment in memory.

    Returns a ``RunResult`` whose ``files`` maps file names to text (empty
    when ``with_files`` is false).  ``DivergenceError`` propagates with its
    context and partial trajectory.
    """
    cfg.validate()
    with threadpool_limits(cfg.diagnostics.blas_threads):
        return _execute(cfg, with_files)


def _execute(cfg, with_files):
    t_start = time.perf_counter()
    d, dcfg = cfg.data, cfg.diagnostics
    spec, ds, params0 = build_inputs(cfg)
    alpha, omega, eps = cfg.resolved_alpha(), cfg.resolved_omega(), cfg.resolved_eps()

    gate = check_assumptions(d.n, d.p, d.mu_norm_sq, d.eta, alpha, omega, cfg.network.m,
                             cfg.network.H, dcfg.delta, dcfg.C)
    facts = check_sample_facts(ds, spec, dcfg.delta, dcfg.C1, dcfg.c_prime)
    # downstream right-hand sides use the measured constant when it is larger
    C1 = max(dcfg.C1, facts.min_C1)
    tc = dg.TheoryConstants.instantiate(C1, params0.act, spec, C=dcfg.C, C0=dcfg.C0,
                                        c=dcfg.c, c_prime=dcfg.c_prime, delta=dcfg.delta)

    hooks = []
    if dcfg.witness and d.mu_norm_sq > 0:
        hooks.append(dg.witness_hook(spec.mu))
    if dcfg.eval_every > 0:
        hooks.append(_eval_hook(spec, tc, d.n, cfg))
    t = cfg.train
    tcfg = TrainConfig(alpha=alpha, stop=t.stop, eps=eps, max_iter=t.max_iter,
                       stride=t.stride, engine=t.engine,
                       divergence_factor=t.divergence_factor)
    traj = train(params0, ds, tcfg, hooks)
    t_train = time.perf_counter() - t_start

    final = traj.params_final
    gen = dg.generalization_stats(final, spec, dcfg.n_test, tc, d.n, cfg.seeds.test,
                                  dcfg.test_chunk)
    last = traj.final
    last.extras["norm_margin"] = gen.normalized_margin
    last.extras["test_err"] = gen.test_error

    checks = {}
    tr = dg.trajectory_checks(traj, ds, tc, alpha, d.mu_norm_sq, omega)
    checks["trajectory"] = tr.as_dict()
    checks["loss_ratio_bound"] = dg.check_loss_ratio_bound(traj, tc.C_r).as_dict()
    checks["margin_monotone"] = dg.check_margin_monotonicity(traj, dcfg.margin_tol).as_dict()
    if dcfg.witness and d.mu_norm_sq > 0:
        checks["witness"] = dg.check_witness(traj, tc.gamma, d.mu_norm_sq).as_dict()
    if dcfg.exp_ratio_check:
        checks["exp_ratio_step"] = dg.check_exp_ratio_steps(traj, ds, tc, alpha,
                                                            d.mu_norm_sq).as_dict()
    checks["descent"] = dg.check_descent(traj).as_dict()
    checks["G_decreasing"] = dg.check_G_decreasing(traj).as_dict()
    grad = dg.gradient_stats(final, ds, spec, tc)

    lsig = traj.column("log_sig_ratio")
    sig1 = traj.record_at(1).sig_ratio if len(traj.records) > 1 else math.nan
    band = (d.eta - dcfg.band_below, d.eta + dcfg.band_above)
    interpolation = last.train_err == 0.0
    summary = {
        "format_version": CSV_VERSION,
        "build": build_hash(),
        "resolved": {"alpha": alpha, "omega_init": omega, "eps": eps, "C1_used": C1,
                     "C_r": tc.C_r, "C2": tc.C2},
        "stop_reason": traj.stop_reason,
        "converged": traj.converged,
        "steps": last.step,
        "final": {"train_loss": last.loss, "train_err": last.train_err, "G_hat": last.G,
                  "W_fro": last.W_fro, "min_margin": float(last.margins.min())},
        "interpolation": interpolation,
        "test_error": gen.test_error,
        "test_error_band": list(band),
        "test_error_in_band": band[0] <= gen.test_error <= band[1],
        "generalization": gen.as_dict(),
        "loss_ratio": {"max_sigmoid": math.exp(float(lsig.max())), "at_step1": sig1,
                       "max_over_step1": math.exp(float(lsig.max())) / sig1
                       if sig1 == sig1 else math.nan},
        "travel_ratio": tr.travel_ratio,
        "noisy_indices": ds.noisy_indices.tolist(),
        "assumptions": gate.as_dict(),
        "sample_facts": {"all_passed": facts.all_passed, "min_C1": facts.min_C1},
        "gradient": {k: v for k, v in grad.__dict__.items()},
        "checks": checks,
        "timing_s": {"train": t_train, "total": time.perf_counter() - t_start},
    }
    summary = _jsonable(summary)

    files = {}
    if with_files:
        files["config.ini"] = serialize_run_config(cfg)
        files["assumptions.txt"] = gate.table() + "\n"
        files["sample_facts.json"] = json.dumps(_jsonable(facts.as_dict()), indent=2) + "\n"
        files["trajectory.csv"] = trajectory_csv(traj)
        files["margins.csv"] = margins_csv(traj, ds.noisy_indices)
        files["summary.json"] = json.dumps(summary, indent=2) + "\n"
    res = RunResult(cfg, summary, traj, files)
    res._ckpt = (params0, final, ds)
    return res


def run_single(cfg, out_dir=None, check=True):
    """Execute ``cfg`` and write its run directory; returns the ``RunResult``.

    ``check`` runs (or reuses) the build self-test first and refuses to run
    if it failed.
    """
    if check:
        ensure_selftest()
    out = os.path.abspath(out_dir) if out_dir else cfg.output.resolve()
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigurationError(f"output directory {out} is not writable")
    try:
        res = execute(cfg)
    except DivergenceError as exc:
        info = {"error": str(exc), "context": _jsonable(exc.context or {})}
        _write(os.path.join(out, "summary.json"), json.dumps(info, indent=2) + "\n")
        if exc.trajectory is not None and exc.trajectory.records:
            _write(os.path.join(out, "trajectory.csv"), trajectory_csv(exc.trajectory))
        raise
    for name, text in res.files.items():
        _write(os.path.join(out, name), text)
    if cfg.diagnostics.checkpoints:
        params0, final, ds = res._ckpt
        save_params(params0, os.path.join(out, "params0.bnet"))
        save_params(final, os.path.join(out, "final.bnet"))
        save_dataset(ds, os.path.join(out, "train.blab"))
    res.directory = out
    return res
