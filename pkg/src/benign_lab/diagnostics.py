"""Quantities measured along a training trajectory and the inequalities
they are expected to satisfy.

Checks on high-probability statements are soft: they return reports that
list violations with indices and constants instead of raising.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DimensionError
from .mixture_data import iter_test_batches, pair_scale
from .objective import (gradient_coefficients, log_surrogate_g, snapshot_from_margins,
                        surrogate_g)
from .shallow_net import forward, readout, slrelu, slrelu_prime


@dataclass(frozen=True)
class TheoryConstants:
    """Constants that instantiate the inequalities.

    ``C_r`` and ``C2`` default to ``16 C1^2 / gamma^2`` and
    ``sqrt(3 C1^2 C_r)``.  ``c`` is the concentration constant of the
    margin-based test bound; its value is a convention.
    """

    C1: float
    gamma: float
    H: float
    C: float = 1.0
    C0: float = 2.0
    C2: Optional[float] = None
    C_r: Optional[float] = None
    c: float = 1.0
    c_prime: float = 0.1
    lam: float = 1.0
    kappa: float = 1.0
    delta: float = 0.05

    def __post_init__(self):
        if self.C_r is None:
            object.__setattr__(self, "C_r", 16.0 * self.C1 ** 2 / self.gamma ** 2)
        if self.C2 is None:
            object.__setattr__(self, "C2", math.sqrt(3.0 * self.C1 ** 2 * self.C_r))
        for name in ("C1", "gamma", "H", "C", "C0", "C2", "C_r", "c", "c_prime",
                     "lam", "kappa", "delta"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"theory constant {name} must be positive")

    @classmethod
    def instantiate(cls, C1, act, spec, **kw):
        return cls(C1=C1, gamma=act.gamma, H=act.H, lam=spec.lam, kappa=spec.kappa, **kw)


@dataclass
class StepDiagnostics:
    """Per-step quantities that make up one CSV row."""

    step: int
    sigmoid_ratio: float
    log_exp_ratio: float
    min_margin: float
    max_margin: float
    G: float
    grad_norm: float
    grad_witness: float
    W_fro: float
    normalized_margin: float = math.nan
    test_error: float = math.nan

    @classmethod
    def from_record(cls, rec, normalized_margin=math.nan, test_error=math.nan):
        return cls(rec.step, rec.sig_ratio, rec.log_exp_ratio, float(rec.margins.min()),
                   float(rec.margins.max()), rec.G, rec.grad_norm,
                   rec.extras.get("grad_witness", math.nan), rec.W_fro,
                   normalized_margin, test_error)


# --- loss ratios ------------------------------------------------------------

@dataclass
class LossRatioStats:
    sigmoid_ratio: float
    log_sigmoid_ratio: float
    exp_ratio: float
    log_exp_ratio: float
    fact_ok: bool


def _exp_or_inf(v):
    return math.exp(v) if v < 709.0 else math.inf


def loss_ratio_stats(snapshot):
    """Extreme-pair loss ratios and the sigmoid/exponential ratio fact.

    Accepts a ``LossSnapshot`` or a margin vector.
    """
    z = np.asarray(getattr(snapshot, "margins", snapshot), dtype=np.float64)
    if z.size < 2:
        raise ConfigurationError("loss ratios need at least two samples")
    zi, zj = float(z.min()), float(z.max())      # largest and smallest g
    lsig = log_surrogate_g(zi) - log_surrogate_g(zj)
    lexp = zj - zi
    log2 = math.log(2.0)
    ok = lsig <= log2 + max(0.0, lexp) + 1e-12
    if zi > 0 and zj > 0:
        ok = ok and lexp <= log2 + lsig + 1e-12
    return LossRatioStats(_exp_or_inf(lsig), lsig, _exp_or_inf(lexp), lexp, bool(ok))


# --- margins and test error --------------------------------------------------

@dataclass
class MarginStats:
    normalized_margin: float
    raw_mean_margin: float
    raw_se: float
    floor: Optional[float] = None


def normalized_margin_floor(tc, mu_norm_sq, n, p):
    return (tc.gamma ** 2 * mu_norm_sq * math.sqrt(n)
            / (8.0 * max(math.sqrt(tc.C1), tc.C2) * math.sqrt(p)))


def margin_stats(params, test_clean, tc=None, n_train=None, mu_norm_sq=None):
    """Mean clean margin ``E[y f(x; W)]`` and its ratio to ``||W||_F``.

    The normalized margin is 0 when ``W = 0``.  When ``tc``, ``n_train``
    and ``mu_norm_sq`` are given the lower bound floor is included.
    """
    if test_clean.n == 0:
        raise ConfigurationError("empty test batch")
    vals = test_clean.y_clean * forward(params, test_clean.X)
    raw = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    wf = float(np.linalg.norm(params.W))
    normalized = raw / wf if wf > 0 else 0.0
    floor = None
    if tc is not None and n_train is not None and mu_norm_sq is not None:
        floor = normalized_margin_floor(tc, mu_norm_sq, n_train, params.p)
    return MarginStats(normalized, raw, se, floor)


def test_error_bound(eta, n, mu_norm_sq, p, C):
    return min(1.0, eta + 2.0 * math.exp(-n * mu_norm_sq ** 2 / (C * p)))


def margin_test_bound(eta, normalized_margin, lam, c=1.0):
    return min(1.0, eta + 2.0 * math.exp(-c * lam * normalized_margin ** 2))


def minimax_reference(eta, n, mu_norm_sq, p, c=1.0, c_prime=1.0):
    return min(1.0, eta + c * math.exp(-c_prime * min(mu_norm_sq, n * mu_norm_sq ** 2 / p)))


@dataclass
class GeneralizationReport:
    test_error: float
    test_error_se: float
    clean_error: float
    normalized_margin: float
    raw_mean_margin: float
    raw_margin_se: float
    error_bound: float
    margin_bound: float
    minimax_reference: float
    margin_floor: float
    n_test: int

    def as_dict(self):
        return dict(self.__dict__)


def generalization_stats(params, spec, n_test, tc, n_train, seed, chunk=1000):
    """Monte Carlo test error on a corrupted batch, plus bound values.

    The clean labels of the same batch give the clean margin, so one batch
    serves both estimates.  Batches are processed ``chunk`` rows at a time.
    """
    if spec.p != params.p:
        raise DimensionError("spec and network dimensions differ")
    wrong = clean_wrong = 0
    s1 = s2 = 0.0
    count = 0
    for batch in iter_test_batches(spec, n_test, seed, True, chunk):
        f = forward(params, batch.X)
        wrong += int(np.count_nonzero(batch.y * f <= 0))
        cm = batch.y_clean * f
        clean_wrong += int(np.count_nonzero(cm <= 0))
        s1 += float(np.sum(cm))
        s2 += float(np.sum(cm * cm))
        count += batch.n
    err = wrong / count
    raw = s1 / count
    var = max(s2 / count - raw * raw, 0.0) * count / max(count - 1, 1)
    wf = float(np.linalg.norm(params.W))
    nm = raw / wf if wf > 0 else 0.0
    mu2 = spec.mu_norm_sq
    return GeneralizationReport(
        test_error=err,
        test_error_se=math.sqrt(err * (1 - err) / count),
        clean_error=clean_wrong / count,
        normalized_margin=nm,
        raw_mean_margin=raw,
        raw_margin_se=math.sqrt(var / count),
        error_bound=test_error_bound(spec.eta, n_train, mu2, spec.p, tc.C),
        margin_bound=margin_test_bound(spec.eta, max(nm, 0.0), tc.lam, tc.c),
        minimax_reference=minimax_reference(spec.eta, n_train, mu2, spec.p),
        margin_floor=normalized_margin_floor(tc, mu2, n_train, spec.p),
        n_test=count,
    )


# --- gradient structure --------------------------------------------------------

def witness_matrix(a, mu):
    """Rows ``a_j mu / ||mu||``; unit Frobenius norm."""
    mu = np.asarray(mu, dtype=np.float64)
    return np.outer(a, mu / np.linalg.norm(mu))


@dataclass
class GradientReport:
    V_fro: Optional[float]
    witness: Optional[float]
    witness_floor: Optional[float]
    witness_ok: Optional[bool]
    grad_norm: float
    grad_cap: float
    grad_cap_ok: bool
    max_cross_ip: float
    cross_ip_bound: float
    min_grad_sq: float
    max_grad_sq: float
    grad_sq_bounds: tuple
    G: float


def xi_matrix(params, X1, X2):
    """``xi[i, k] = (1/m) sum_j phi'(<w_j, x_i>) phi'(<w_j, x_k>)``."""
    d1 = slrelu_prime(X1 @ params.W.T, params.act)
    d2 = slrelu_prime(X2 @ params.W.T, params.act)
    return d1 @ d2.T / params.m


def xi_coefficient(params, x1, x2):
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != (params.p,) or x2.shape != (params.p,):
        raise DimensionError("inputs must have length p")
    return float(xi_matrix(params, x1[None, :], x2[None, :])[0, 0])


def gradient_stats(params, ds, spec, tc):
    """Gradient witness, gradient cap, and per-sample gradient correlations."""
    if ds.p != params.p:
        raise DimensionError("dataset and network dimensions differ")
    n, p = ds.n, ds.p
    pre = ds.X @ params.W.T
    z = ds.y * readout(slrelu(pre, params.act), params.a)
    snap = snapshot_from_margins(z)
    coef = gradient_coefficients(pre, snap.g, ds.y.astype(float), params.a, params.act)
    grad = coef.T @ ds.X
    gnorm = float(np.linalg.norm(grad))

    mu2 = spec.mu_norm_sq
    if mu2 > 0:
        V = witness_matrix(params.a, spec.mu)
        vf = float(np.linalg.norm(V))
        wit = float(-np.sum(grad * V))
        floor = tc.gamma * math.sqrt(mu2) * snap.G / 4.0
        wok = wit >= floor
    else:
        vf = wit = floor = wok = None

    # <grad f(x_i), grad f(x_k)> = <x_i, x_k> * xi(i, k)
    d = slrelu_prime(pre, params.act)
    ip = ds.gram * (d @ d.T / params.m)
    diag = np.diag(ip).copy()
    if n >= 2:
        off = np.abs(ip - np.diag(diag))
        max_cross = float(off[np.triu_indices(n, 1)].max())
    else:
        max_cross = 0.0
    cap = math.sqrt(tc.C1 * p) * snap.G
    if wit is not None and wit > gnorm * (1 + 1e-12) + 1e-300:
        raise AssertionError("witness exceeds gradient norm; V is not unit norm")
    return GradientReport(
        V_fro=vf, witness=wit, witness_floor=floor, witness_ok=wok,
        grad_norm=gnorm, grad_cap=cap, grad_cap_ok=gnorm <= cap * (1 + 1e-12),
        max_cross_ip=max_cross,
        cross_ip_bound=tc.C1 * pair_scale(mu2, p, n, tc.delta),
        min_grad_sq=float(diag.min()), max_grad_sq=float(diag.max()),
        grad_sq_bounds=(tc.gamma ** 2 * p / tc.C1, tc.C1 * p),
        G=snap.G,
    )


def smoothness_residual(W, V, x, act, a):
    """``|f(x; W) - f(x; V) - <grad f(x; V), W - V>|`` and its bound
    ``H ||x||^2 ||W - V||_2^2 / (2 sqrt(m))``."""
    from .shallow_net import NetParams, grad_wrt_weights
    pw, pv = NetParams(W, a, act), NetParams(V, a, act)
    lin = float(np.sum(grad_wrt_weights(pv, x) * (pw.W - pv.W)))
    resid = abs(forward(pw, x) - forward(pv, x) - lin)
    D = pw.W - pv.W
    bound = act.H * float(x @ x) * np.linalg.norm(D, 2) ** 2 / (2.0 * math.sqrt(pw.m))
    return resid, float(bound)


def grad_norm_sandwich(params, x):
    """``(gamma^2 ||x||^2, ||grad f(x; W)||_F^2, ||x||^2)``."""
    x = np.asarray(x, dtype=np.float64)
    d = slrelu_prime(params.W @ x, params.act)
    sq = float(x @ x)
    return params.act.gamma ** 2 * sq, float(np.sum(d * d) / params.m) * sq, sq


def witness_hook(mu):
    """Trainer hook recording ``<-grad L_hat, V>`` at recorded steps."""
    mu = np.asarray(mu, dtype=np.float64)
    norm = float(np.linalg.norm(mu))
    cache = {}

    def hook(state):
        if norm == 0.0:
            return {"grad_witness": math.nan}
        key = id(state.ds)
        if key not in cache:
            cache[key] = state.ds.X @ mu
        xmu = cache[key]
        return {"grad_witness": float(-(state.a @ (state.coef.T @ xmu)) / norm)}

    return hook


# --- trajectory checks ----------------------------------------------------------

@dataclass
class Check:
    passed: Optional[bool]
    detail: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def as_dict(self):
        return {"passed": self.passed, **self.detail,
                "violations": self.violations[:50]}


@dataclass
class TrajectoryReport:
    norm_growth: Check
    travel: Check
    init_norms: Check
    optimization_rate: Check
    min_C2: float
    travel_ratio: float
    travel_floor: float

    def as_dict(self):
        return {"norm_growth": self.norm_growth.as_dict(),
                "travel": self.travel.as_dict(),
                "init_norms": self.init_norms.as_dict(),
                "optimization_rate": self.optimization_rate.as_dict(),
                "min_C2": self.min_C2, "travel_ratio": self.travel_ratio,
                "travel_floor": self.travel_floor}


def trajectory_checks(traj, ds, tc, alpha, mu_norm_sq, omega_init=None):
    """Norm growth, weight travel, initialization norms, optimization rate.

    ``omega_init`` is needed for the initialization-norm check; without it
    that check is reported as not applicable.
    """
    if not traj.records or traj.records[0].step != 0 or traj.params0 is None:
        raise ConfigurationError("trajectory lacks the step-0 checkpoint")
    recs = traj.records
    n, p = ds.n, ds.p
    w0 = recs[0].W_fro
    scale = alpha * math.sqrt(p / n)

    # (a) ||W_t|| <= ||W_0|| + C2 alpha sqrt(p/n) sum_{s<t} G_s
    need, viol = 0.0, []
    for r in recs[1:]:
        excess = r.W_fro - w0
        budget = scale * r.G_cumsum
        if excess > 0:
            need = max(need, excess / budget) if budget > 0 else math.inf
        if excess > tc.C2 * budget * (1 + 1e-12):
            viol.append(r.step)
    norm_growth = Check(not viol, {"C2": tc.C2, "min_C2": need}, viol)

    # (b) weight travel after one step
    try:
        r1 = traj.record_at(1)
        ratio = r1.travel / w0 if w0 > 0 else math.inf
    except KeyError:
        ratio = math.nan
    floor = tc.gamma * math.sqrt(mu_norm_sq) / 48.0
    travel = Check(None if math.isnan(ratio) else bool(ratio >= floor),
                   {"ratio": ratio, "floor": floor})

    # (c) initialization norms
    W0 = traj.params0.W
    m = W0.shape[0]
    if omega_init is None:
        init = Check(None, {"note": "omega_init not supplied"})
    else:
        fro_sq = float(np.sum(W0 * W0))
        spec_norm = float(np.linalg.norm(W0, 2))
        fro_cap = 1.5 * omega_init ** 2 * m * p
        spec_cap = tc.C0 * omega_init * (math.sqrt(m) + math.sqrt(p))
        init = Check(bool(fro_sq <= fro_cap and spec_norm <= spec_cap),
                     {"fro_sq": fro_sq, "fro_sq_cap": fro_cap,
                      "spectral": spec_norm, "spectral_cap": spec_cap})

    # (d) training error at step T-1 <= 2 sqrt(32 L_0 / (gamma^2 ||mu||^2 alpha T))
    last = recs[-1]
    T = last.step + 1
    rate = 2.0 * math.sqrt(32.0 * recs[0].loss / (tc.gamma ** 2 * mu_norm_sq * alpha * T)) \
        if mu_norm_sq > 0 else math.inf
    opt = Check(bool(last.train_err <= rate), {"train_err": last.train_err, "bound": rate,
                                               "T": T})
    return TrajectoryReport(norm_growth, travel, init, opt, need, ratio, floor)


def check_margin_monotonicity(traj, tol=1e-9, start=1):
    """Per-sample margins never drop by more than ``tol`` between consecutive
    recorded steps from step ``start`` on."""
    recs = [r for r in traj.records if r.step >= start]
    viol = []
    worst = math.inf
    for prev, cur in zip(recs, recs[1:]):
        d = cur.margins - prev.margins
        worst = min(worst, float(d.min()))
        for k in np.flatnonzero(d < -tol):
            viol.append((prev.step, int(k), float(d[k])))
    return Check(not viol, {"tol": tol, "min_increment": worst, "pairs": len(recs) - 1},
                 viol)


def check_loss_ratio_bound(traj, C_r):
    ratios = traj.column("log_sig_ratio")
    bad = [int(traj.records[i].step) for i in np.flatnonzero(ratios > math.log(C_r))]
    return Check(not bad, {"C_r": C_r, "max_ratio": _exp_or_inf(float(ratios.max()))}, bad)


def check_witness(traj, gamma, mu_norm_sq, min_fraction=0.99):
    """``<-grad L_hat, V> >= gamma ||mu|| G_hat / 4`` at recorded steps."""
    viol, total = [], 0
    for r in traj.records:
        w = r.extras.get("grad_witness")
        if w is None or math.isnan(w):
            continue
        total += 1
        floor = gamma * math.sqrt(mu_norm_sq) * r.G / 4.0
        if w < floor:
            viol.append((r.step, w, floor))
    frac = 1.0 - len(viol) / total if total else math.nan
    return Check(bool(total and frac >= min_fraction),
                 {"fraction": frac, "checked": total, "min_fraction": min_fraction}, viol)


def check_descent(traj, tol=0.0):
    loss = traj.column("loss")
    bad = [int(traj.records[i + 1].step) for i in np.flatnonzero(np.diff(loss) > tol)]
    return Check(not bad, {}, bad)


def check_G_decreasing(traj, start=1, tol=0.0):
    recs = [r for r in traj.records if r.step >= start]
    G = np.array([r.G for r in recs])
    bad = [int(recs[i + 1].step) for i in np.flatnonzero(np.diff(G) > tol)]
    return Check(not bad, {}, bad)


def exp_ratio_step_bound(g, G, mu_norm_sq, n, p, tc, alpha):
    """Upper bound on ``log A_{t+1} - log A_t`` for every pair (i, j).

    Returns an ``n x n`` matrix with entry ``[i, j]`` the log of the two
    multiplicative factors bounding the exponential loss ratio growth.
    """
    g = np.asarray(g, dtype=np.float64)
    ratio = g[:, None] / g[None, :]
    contract = -(g[None, :] * alpha * tc.gamma ** 2 * p / (tc.C1 * n)) \
        * (ratio - tc.C1 ** 2 / tc.gamma ** 2)
    spread = 2.0 * tc.C1 * alpha * (mu_norm_sq + 2.0 * math.sqrt(p * math.log(n / tc.delta))) * G
    return contract + spread


def check_exp_ratio_steps(traj, ds, tc, alpha, mu_norm_sq):
    """One-step exponential loss ratio bound on consecutive stride-1 records."""
    viol, checked = [], 0
    recs = traj.records
    for prev, cur in zip(recs, recs[1:]):
        if cur.step != prev.step + 1:
            continue
        checked += 1
        # log A(i, j) = z_j - z_i
        d_prev = prev.margins[None, :] - prev.margins[:, None]
        d_cur = cur.margins[None, :] - cur.margins[:, None]
        bound = exp_ratio_step_bound(surrogate_g(prev.margins), prev.G, mu_norm_sq,
                                     ds.n, ds.p, tc, alpha)
        excess = (d_cur - d_prev) - bound
        if excess.max() > 1e-12:
            i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
            viol.append((prev.step, int(i), int(j), float(excess.max())))
    return Check(bool(checked) and not viol if checked else None,
                 {"checked_steps": checked}, viol)
