"""Full-batch gradient descent on the empirical logistic risk.

Two engines produce the same iterates in exact arithmetic:

``direct``
    keeps ``W`` explicitly and applies ``W <- W - alpha * grad`` each step
    (``step``); every step costs two ``n x p x m`` products.
``gram``
    uses that every gradient is ``C.T @ X`` for an ``n x m`` coefficient
    matrix, so ``W_t = W_0 + B_t @ X``.  Pre-activations follow from the
    ``n x n`` Gram matrix and a step costs ``O(n^2 m)``.  ``W`` is only
    materialized for checkpoints and hooks that ask for it.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, DivergenceError, NonFiniteError
from .objective import gradient_coefficients, loss_gradient, snapshot_from_margins
from .shallow_net import readout, slrelu


class StopRule(str, enum.Enum):
    FIXED = "fixed"      # run exactly max_iter steps
    LOSS = "loss"        # stop once L_hat <= eps
    G = "G"              # stop once G_hat <= eps / 2


class Engine(str, enum.Enum):
    GRAM = "gram"
    DIRECT = "direct"


@dataclass(frozen=True)
class TrainConfig:
    alpha: float
    stop: StopRule = StopRule.LOSS
    eps: float = 0.0
    max_iter: int = 100_000
    stride: int = 1
    engine: Engine = Engine.GRAM
    divergence_factor: float = 10.0
    keep_weights: bool = False

    def __post_init__(self):
        if not (self.alpha > 0.0 and math.isfinite(self.alpha)):
            raise ConfigurationError(f"step size must be positive, got {self.alpha}")
        try:
            object.__setattr__(self, "stop", StopRule(self.stop))
            object.__setattr__(self, "engine", Engine(self.engine))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.stop is not StopRule.FIXED and not self.eps > 0.0:
            raise ConfigurationError("target stopping rules need eps > 0")
        if int(self.max_iter) != self.max_iter or self.max_iter < 0:
            raise ConfigurationError("max_iter must be a non-negative integer")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ConfigurationError("record stride must be >= 1")


def required_iterations(L0, mu_norm_sq, alpha, eps, C):
    """Iteration count ``ceil(C * L0 / (||mu||^2 * alpha * eps^2))``."""
    for name, v in (("L0", L0), ("mu_norm_sq", mu_norm_sq), ("alpha", alpha),
                    ("eps", eps), ("C", C)):
        if not (v > 0 and math.isfinite(v)):
            raise ConfigurationError(f"{name} must be positive, got {v}")
    return math.ceil(C * L0 / (mu_norm_sq * alpha * eps ** 2))


def theory_hyperparameters(p, m, H, C):
    """Largest step size allowed by the step-size assumption, and the
    initialization scale ``alpha / sqrt(m p)`` that makes the
    initialization assumption tight."""
    alpha = 1.0 / (C * max(1.0, H / math.sqrt(m)) * p ** 2)
    return alpha, alpha / math.sqrt(m * p)


def step(params, ds, alpha):
    """One gradient-descent update; the second layer is untouched."""
    grad = loss_gradient(params, ds)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient",
                             {"W_fro": float(np.linalg.norm(params.W))})
    return params.with_weights(params.W - alpha * grad)


@dataclass
class StepRecord:
    step: int
    loss: float
    train_err: float
    G: float
    log_sig_ratio: float
    log_exp_ratio: float
    grad_norm: float
    W_fro: float
    travel: float          # ||W_t - W_0||_F
    G_cumsum: float        # sum of G_hat over steps s < t
    margins: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def sig_ratio(self):
        return math.exp(self.log_sig_ratio) if self.log_sig_ratio < 709.0 else math.inf


@dataclass
class Trajectory:
    records: list
    params0: object
    params_final: object
    alpha: float
    stop_reason: str
    converged: bool
    weights: Optional[list] = None

    @property
    def steps(self):
        return np.array([r.step for r in self.records])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def margin_matrix(self):
        return np.vstack([r.margins for r in self.records])

    def record_at(self, t):
        for r in self.records:
            if r.step == t:
                return r
        raise KeyError(t)

    @property
    def final(self):
        return self.records[-1]


class StepState:
    """What a diagnostic hook sees at step ``t``.

    ``coef`` is the gradient coefficient matrix (``grad = coef.T @ X``);
    ``params()`` materializes the current weights on demand.
    """

    def __init__(self, t, snapshot, coef, ds, a, act, weights_fn):
        self.t = t
        self.snapshot = snapshot
        self.coef = coef
        self.ds = ds
        self.a = a
        self.act = act
        self._weights_fn = weights_fn
        self._params = None

    def params(self):
        if self._params is None:
            from .shallow_net import NetParams
            self._params = NetParams(self._weights_fn(), self.a, self.act)
        return self._params


Hook = Callable[[StepState], dict]


def _log_ratios(z):
    # max_i g_i / min_j g_j and max exp(-z_i) / exp(-z_j), both in log space
    lg_max = -(max(z.min(), 0.0) + math.log1p(math.exp(-abs(z.min()))))
    lg_min = -(max(z.max(), 0.0) + math.log1p(math.exp(-abs(z.max()))))
    return lg_max - lg_min, float(z.max() - z.min())


class _GramEngine:
    def __init__(self, params0, ds):
        self.X = ds.X
        self.K = ds.gram
        self.W0 = params0.W
        self.P0 = ds.X @ params0.W.T            # n x m
        self.B = np.zeros((params0.m, ds.n))    # W = W0 + B @ X
        self.w0_sq = float(np.sum(self.W0 * self.W0))

    def pre(self):
        return self.P0 + self.K @ self.B.T

    def update(self, coef, alpha):
        self.B -= alpha * coef.T

    def grad_norm(self, coef):
        return math.sqrt(max(float(np.sum((self.K @ coef) * coef)), 0.0))

    def travel(self):
        return math.sqrt(max(float(np.sum((self.B @ self.K) * self.B)), 0.0))

    def w_fro(self):
        sq = self.w0_sq + 2.0 * float(np.sum(self.B * self.P0.T)) \
            + float(np.sum((self.B @ self.K) * self.B))
        return math.sqrt(max(sq, 0.0))

    def weights(self):
        return self.W0 + self.B @ self.X


class _DirectEngine:
    def __init__(self, params0, ds):
        self.X = ds.X
        self.W0 = params0.W
        self.W = params0.W.copy()
        self._grad = None

    def pre(self):
        return self.X @ self.W.T

    def grad_norm(self, coef):
        self._grad = coef.T @ self.X
        return float(np.linalg.norm(self._grad))

    def update(self, coef, alpha):
        grad = self._grad if self._grad is not None else coef.T @ self.X
        self.W = self.W - alpha * grad
        self._grad = None

    def travel(self):
        return float(np.linalg.norm(self.W - self.W0))

    def w_fro(self):
        return float(np.linalg.norm(self.W))

    def weights(self):
        return self.W.copy()


def train(params0, ds, cfg, hooks: Sequence[Hook] = ()):
    """Run gradient descent until ``cfg.stop`` fires or ``cfg.max_iter``.

    Steps 0 and 1 are always recorded, then every ``cfg.stride``-th step
    and the final step.  Raises ``DivergenceError`` when ``L_hat`` exceeds
    ``cfg.divergence_factor`` times its running minimum.
    """
    if ds.p != params0.p:
        raise DimensionError("dataset and network dimensions differ")
    eng = (_GramEngine if cfg.engine is Engine.GRAM else _DirectEngine)(params0, ds)
    a, act, y = params0.a, params0.act, ds.y.astype(np.float64)
    records, weights = [], ([] if cfg.keep_weights else None)
    running_min = math.inf
    g_cumsum = 0.0
    t = 0
    while True:
        pre = eng.pre()
        z = y * readout(slrelu(pre, act), a)
        snap = snapshot_from_margins(z)
        if not math.isfinite(snap.loss):
            raise NonFiniteError("non-finite loss", {"step": t}, _partial(records, params0, cfg))
        running_min = min(running_min, snap.loss)
        if snap.loss > cfg.divergence_factor * running_min:
            raise DivergenceError(
                f"loss {snap.loss:.6g} at step {t} exceeds {cfg.divergence_factor:g}x "
                f"its running minimum {running_min:.6g}; step size too large?",
                {"step": t, "loss": snap.loss, "running_min": running_min,
                 "alpha": cfg.alpha, "W_fro": eng.w_fro()},
                _partial(records, params0, cfg))

        if cfg.stop is StopRule.LOSS:
            done = snap.loss <= cfg.eps
        elif cfg.stop is StopRule.G:
            done = snap.G <= cfg.eps / 2.0
        else:
            done = False
        last = done or t >= cfg.max_iter

        coef = gradient_coefficients(pre, snap.g, y, a, act)
        gnorm = eng.grad_norm(coef)
        if not math.isfinite(gnorm):
            raise NonFiniteError("non-finite gradient",
                                 {"step": t, "loss": snap.loss, "W_fro": eng.w_fro()},
                                 _partial(records, params0, cfg))

        if t <= 1 or t % cfg.stride == 0 or last:
            state = StepState(t, snap, coef, ds, a, act, eng.weights)
            extras = {}
            for hook in hooks:
                extras.update(hook(state))
            lsig, lexp = _log_ratios(z)
            records.append(StepRecord(
                step=t, loss=snap.loss, train_err=snap.train_err, G=snap.G,
                log_sig_ratio=lsig, log_exp_ratio=lexp, grad_norm=gnorm,
                W_fro=eng.w_fro(), travel=eng.travel(), G_cumsum=g_cumsum,
                margins=z.copy(), extras=extras))
            if weights is not None:
                weights.append(eng.weights())
        if last:
            break
        g_cumsum += snap.G
        eng.update(coef, cfg.alpha)
        t += 1

    if cfg.stop is StopRule.FIXED:
        reason, converged = "fixed", True
    elif done:
        reason, converged = "target", True
    else:
        reason, converged = "max_iter", False
    return Trajectory(records, params0, params0.with_weights(eng.weights()),
                      cfg.alpha, reason, converged, weights)


def _partial(records, params0, cfg):
    return Trajectory(list(records), params0, None, cfg.alpha, "aborted", False)
