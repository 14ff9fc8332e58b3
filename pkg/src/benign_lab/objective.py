"""Logistic loss, its negative derivative ``g``, and empirical averages.

All per-sample reductions use ``numpy.sum`` over contiguous float64
arrays (pairwise summation), so results do not depend on how callers
batch the work.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .shallow_net import readout, slrelu, slrelu_prime


def _out(z, val):
    return float(val) if np.ndim(z) == 0 else val


def logistic_loss(z):
    """``log(1 + exp(-z))`` without overflow."""
    z = np.asarray(z, dtype=np.float64)
    pos = np.log1p(np.exp(-np.abs(z)))
    return _out(z, np.where(z >= 0, pos, pos - z))


def surrogate_g(z):
    """``g(z) = -d/dz log(1 + exp(-z)) = 1 / (1 + exp(z))``."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return _out(z, np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e)))


def log_surrogate_g(z):
    """``log g(z) = -softplus(z)``, finite for every finite ``z``."""
    z = np.asarray(z, dtype=np.float64)
    return _out(z, -(np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))))


@dataclass(frozen=True, eq=False)
class LossSnapshot:
    margins: np.ndarray
    g: np.ndarray
    loss: float
    G: float
    train_err: float

    @property
    def n(self):
        return self.margins.size


def snapshot_from_margins(margins):
    z = np.asarray(margins, dtype=np.float64)
    if z.size == 0:
        raise ConfigurationError("empty dataset")
    g = surrogate_g(z)
    n = z.size
    return LossSnapshot(
        margins=z,
        g=g,
        loss=float(np.sum(logistic_loss(z)) / n),
        G=float(np.sum(g) / n),
        # a zero margin counts as a mistake for either label
        train_err=float(np.count_nonzero(z <= 0.0) / n),
    )


def _check(params, ds):
    if ds.n == 0:
        raise ConfigurationError("empty dataset")
    if ds.p != params.p:
        raise DimensionError(f"dataset dimension {ds.p} != network dimension {params.p}")


def margins(params, ds):
    _check(params, ds)
    pre = ds.X @ params.W.T
    return ds.y * readout(slrelu(pre, params.act), params.a)


def loss_snapshot(params, ds):
    return snapshot_from_margins(margins(params, ds))


def gradient_coefficients(pre, g, y, a, act):
    """Matrix ``C`` (n x m) with ``grad L_hat = C.T @ X``.

    ``C[i, j] = -(1/n) g_i y_i a_j phi'(pre[i, j])``.
    """
    n = pre.shape[0]
    return -(g * y / n)[:, None] * slrelu_prime(pre, act) * a[None, :]


def loss_gradient(params, ds):
    """Gradient of the empirical logistic risk in ``W`` (GD subtracts it)."""
    _check(params, ds)
    pre = ds.X @ params.W.T
    z = ds.y * readout(slrelu(pre, params.act), params.a)
    coef = gradient_coefficients(pre, surrogate_g(z), ds.y, params.a, params.act)
    return coef.T @ ds.X
