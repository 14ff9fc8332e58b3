"""Brute-force verifiers for the vectorized network, loss and gradient.

Everything here is deliberately slow and simple: explicit Python loops,
central differences, and power iteration.  ``selftest`` bundles the three
oracles into one pass/fail verdict.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OracleTooLarge
from .mixture_data import MixtureSpec, corrupt_labels, sample_clean
from .objective import loss_gradient, loss_snapshot
from .shallow_net import ActivationSpec, init_params, slrelu_prime

NAIVE_SIZE_CAP = 10 ** 6


@dataclass
class OracleVerdict:
    name: str
    max_rel_err: float
    max_abs_err: float
    worst_index: tuple
    tol: float
    passed: bool
    notes: list = field(default_factory=list)

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        extra = f" ({'; '.join(self.notes)})" if self.notes else ""
        return (f"[{flag}] {self.name}: rel {self.max_rel_err:.3e} abs {self.max_abs_err:.3e} "
                f"at {self.worst_index} tol {self.tol:.1e}{extra}")


def _compare(name, numeric, analytic, tol, notes=None):
    numeric = np.asarray(numeric, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    diff = np.abs(numeric - analytic)
    abs_err = float(diff.max()) if diff.size else 0.0
    scale = float(np.abs(analytic).max()) if analytic.size else 0.0
    rel = abs_err / scale if scale > 0 else abs_err
    worst = tuple(int(i) for i in np.unravel_index(int(np.argmax(diff)), diff.shape)) \
        if diff.size else ()
    notes = list(notes or [])
    return OracleVerdict(name, rel, abs_err, worst, tol,
                         rel <= tol and not any("step too small" in s for s in notes), notes)


def finite_diff_loss_gradient(params, ds, h=1e-5, tol=1e-6):
    """Central-difference gradient of ``L_hat`` in ``W``, entry by entry.

    The relative error is ``max |numeric - analytic| / max |analytic|``.
    Entries where ``W + h`` rounds back to ``W`` are flagged as
    "step too small" and fail the verdict.
    """
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    W = params.W
    num = np.empty_like(W)
    notes = []
    for j in range(W.shape[0]):
        for k in range(W.shape[1]):
            w = W[j, k]
            if w + h == w or w - h == w:
                notes.append(f"step too small at {(j, k)}")
                num[j, k] = 0.0
                continue
            Wp = W.copy()
            Wp[j, k] = w + h
            Wm = W.copy()
            Wm[j, k] = w - h
            lp = loss_snapshot(params.with_weights(Wp), ds).loss
            lm = loss_snapshot(params.with_weights(Wm), ds).loss
            num[j, k] = (lp - lm) / (2.0 * h)
    verdict = _compare("finite-difference gradient", num, loss_gradient(params, ds), tol,
                       notes[:5])
    return num, verdict


def _phi(z, g, H):
    if z >= 1.0 / H:
        return z - (1.0 - g) / (4.0 * H)
    if z <= -1.0 / H:
        return g * z - (1.0 - g) / (4.0 * H)
    return (1.0 - g) * H / 4.0 * z * z + (1.0 + g) / 2.0 * z


def _dphi(z, g, H):
    if z >= 1.0 / H:
        return 1.0
    if z <= -1.0 / H:
        return g
    return (1.0 - g) * H / 2.0 * z + (1.0 + g) / 2.0


def naive_reference(params, ds):
    """Network outputs on the training inputs and ``grad L_hat`` by loops.

    Raises ``OracleTooLarge`` if ``n * m * p`` exceeds ``NAIVE_SIZE_CAP``.
    """
    n, p, m = ds.n, ds.p, params.m
    if n * m * p > NAIVE_SIZE_CAP:
        raise OracleTooLarge(f"n*m*p = {n * m * p} exceeds {NAIVE_SIZE_CAP}")
    W = params.W.tolist()
    a = params.a.tolist()
    X = ds.X.tolist()
    y = ds.y.tolist()
    g, H = params.act.gamma, params.act.H
    out = [0.0] * n
    grad = [[0.0] * p for _ in range(m)]
    for i in range(n):
        pre = []
        for j in range(m):
            s = 0.0
            for k in range(p):
                s += W[j][k] * X[i][k]
            pre.append(s)
        f = 0.0
        for j in range(m):
            f += a[j] * _phi(pre[j], g, H)
        out[i] = f
        z = y[i] * f
        gi = 1.0 / (1.0 + math.exp(z)) if z < 700 else math.exp(-z)
        for j in range(m):
            c = -gi * y[i] * a[j] * _dphi(pre[j], g, H) / n
            for k in range(p):
                grad[j][k] += c * X[i][k]
    return np.array(out), np.array(grad)


def activation_derivative_check(act, grid, tol=1e-7):
    """Numeric first and second derivatives of the activation on ``grid``.

    Points within two steps of a knot are skipped.  The first derivative
    must match ``slrelu_prime`` to ``tol`` relative; the second must lie in
    ``[-tol, H + tol]``.
    """
    from .shallow_net import slrelu
    grid = np.asarray(grid, dtype=np.float64).ravel()
    h1 = min(1e-5, 0.01 / act.H)
    h2 = min(1e-3, 0.1 / act.H)
    knot = act.knot
    keep = np.abs(np.abs(grid) - knot) > 2.0 * max(h1, h2)
    notes = []
    skipped = int(np.count_nonzero(~keep))
    if skipped:
        notes.append(f"skipped {skipped} point(s) near the knots +-{knot:g}")
    z = grid[keep]
    d1 = (slrelu(z + h1, act) - slrelu(z - h1, act)) / (2.0 * h1)
    d2 = (slrelu(z + h2, act) - 2.0 * slrelu(z, act) + slrelu(z - h2, act)) / (h2 * h2)
    verdict = _compare("activation derivative", d1, slrelu_prime(z, act), tol, notes)
    lo, hi = (float(d2.min()), float(d2.max())) if z.size else (0.0, 0.0)
    second_ok = lo >= -tol and hi <= act.H + tol
    if not second_ok:
        verdict.notes.append(f"second derivative range [{lo:.3g}, {hi:.3g}] outside [0, H]")
    verdict.passed = verdict.passed and second_ok
    verdict.second_range = (lo, hi)
    verdict.second = d2
    verdict.points = z
    return verdict


def power_iteration_norm(M, iters=500, seed=0, tol=1e-12):
    """Spectral norm by power iteration on ``M.T @ M``."""
    M = np.asarray(M, dtype=np.float64)
    v = np.random.default_rng(seed).standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        u = M.T @ (M @ v)
        nu = np.linalg.norm(u)
        if nu == 0:
            return 0.0
        v = u / nu
        new = math.sqrt(nu)
        if abs(new - est) <= tol * new:
            return new
        est = new
    return est


def _instance(seed, n=8, p=16, m=4, gamma=0.5, H=2.0, omega=0.5):
    spec = MixtureSpec.gaussian(p, 4.0, eta=0.25, noise_policy="fixed-count")
    ds = corrupt_labels(sample_clean(spec, n, seed), spec, seed)
    params = init_params(m, p, omega, ActivationSpec(gamma, H), seed)
    return params, ds


def selftest(n_instances=20, verbose=False):
    """Run all three oracles on small random instances; returns the verdicts
    and an overall flag."""
    verdicts = []
    worst = None
    for s in range(n_instances):
        params, ds = _instance(s)
        _, v = finite_diff_loss_gradient(params, ds)
        if worst is None or v.max_rel_err > worst.max_rel_err:
            worst = v
    worst.name = f"finite-difference gradient ({n_instances} instances, worst)"
    verdicts.append(worst)

    params, ds = _instance(0, n=6, p=12, m=5)
    out, grad = naive_reference(params, ds)
    from .shallow_net import forward
    verdicts.append(_compare("naive forward", out, forward(params, ds.X), 1e-12))
    verdicts.append(_compare("naive gradient", grad, loss_gradient(params, ds), 1e-12))

    grid = np.linspace(-5.0, 5.0, 10_000)
    for g, H in ((0.5, 2.0), (1.0, 1.0), (0.1, 1e3)):
        v = activation_derivative_check(ActivationSpec(g, H), grid)
        v.name = f"activation derivative (gamma={g:g}, H={H:g})"
        verdicts.append(v)
    ok = all(v.passed for v in verdicts)
    if verbose:
        for v in verdicts:
            print(v)
    return ok, verdicts
