"""Two-layer network ``f(x; W) = sum_j a_j phi(<w_j, x>)``.

The activation is the smoothed leaky ReLU with leak ``gamma`` and
smoothness ``H``: linear with slope ``gamma`` below ``-1/H``, the identity
shifted by ``(1 - gamma) / (4H)`` above ``1/H``, and a quadratic blend in
between.  Only the first layer ``W`` is trained; ``a`` has entries
``+-1/sqrt(m)`` and stays fixed.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .rng import check_seed, stream


@dataclass(frozen=True)
class ActivationSpec:
    gamma: float
    H: float

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigurationError(f"leak gamma must lie in (0, 1], got {self.gamma}")
        if not (self.H > 0.0 and math.isfinite(self.H)):
            raise ConfigurationError(f"smoothness H must be positive, got {self.H}")

    @property
    def knot(self):
        return 1.0 / self.H


def _out(z, val):
    return float(val) if np.ndim(z) == 0 else val


def slrelu(z, act):
    z = np.asarray(z, dtype=np.float64)
    g, H = act.gamma, act.H
    shift = (1.0 - g) / (4.0 * H)
    mid = (1.0 - g) * H / 4.0 * z * z + (1.0 + g) / 2.0 * z
    val = np.where(z >= 1.0 / H, z - shift, np.where(z <= -1.0 / H, g * z - shift, mid))
    return _out(z, val)


def slrelu_prime(z, act):
    z = np.asarray(z, dtype=np.float64)
    g, H = act.gamma, act.H
    mid = (1.0 - g) * H / 2.0 * z + (1.0 + g) / 2.0
    val = np.where(z >= 1.0 / H, 1.0, np.where(z <= -1.0 / H, g, mid))
    return _out(z, val)


def slrelu_second(z, act):
    # knots belong to the middle branch
    z = np.asarray(z, dtype=np.float64)
    val = np.where(np.abs(z) <= 1.0 / act.H, (1.0 - act.gamma) * act.H / 2.0, 0.0)
    return _out(z, val)


@dataclass(frozen=True, eq=False)
class NetParams:
    W: np.ndarray
    a: np.ndarray
    act: ActivationSpec

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        if W.ndim != 2 or a.shape != (W.shape[0],):
            raise DimensionError("W must be (m, p) and a must have length m")
        if not np.all(np.isfinite(W)):
            raise ConfigurationError("weights must be finite")
        m = W.shape[0]
        if not np.all(np.abs(a) == 1.0 / math.sqrt(m)):
            raise ConfigurationError("second-layer entries must be +-1/sqrt(m)")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "a", a)

    @property
    def m(self):
        return self.W.shape[0]

    @property
    def p(self):
        return self.W.shape[1]

    @property
    def signs(self):
        return np.sign(self.a).astype(np.int8)

    def with_weights(self, W):
        return NetParams(W, self.a, self.act)


def signs_to_a(signs):
    signs = np.asarray(signs, dtype=np.float64)
    return signs / math.sqrt(signs.size)


def init_params(m, p, omega_init, act, seed, sign_seed=None):
    """Gaussian first layer with std ``omega_init``, random fixed signs.

    Row ``j`` of ``W`` comes from its own stream, and the signs come from a
    separate stream keyed by ``sign_seed`` (default ``seed``), so the
    second layer can be held fixed while ``W`` is redrawn.
    """
    for name, v in (("m", m), ("p", p)):
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise ConfigurationError(f"{name} must be a positive integer, got {v}")
    m, p = int(m), int(p)
    if not omega_init >= 0.0:
        raise ConfigurationError(f"initialization scale must be >= 0, got {omega_init}")
    seed = check_seed(seed)
    sign_seed = seed if sign_seed is None else check_seed(sign_seed)
    W = np.empty((m, p))
    for j in range(m):
        W[j] = stream(seed, "weights", j).standard_normal(p)
    W *= omega_init
    bits = stream(sign_seed, "signs").integers(0, 2, size=m)
    return NetParams(W, signs_to_a(2 * bits - 1), act)


def _check_x(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.p or x.ndim not in (1, 2):
        raise DimensionError(f"input dimension {x.shape} does not match p={params.p}")
    return x


def preactivations(params, X):
    """``X @ W.T``: rows are samples, columns neurons."""
    return _check_x(params, X) @ params.W.T


def readout(phi, a):
    """``phi @ a`` as rounded products then a sum, so heads with opposite
    signs and equal activations cancel exactly (no fused multiply-add)."""
    return np.sum(phi * a, axis=-1)


def forward(params, x):
    """Network output for one input (scalar) or a batch of rows (vector)."""
    x = _check_x(params, x)
    out = readout(slrelu(x @ params.W.T, params.act), params.a)
    return float(out) if x.ndim == 1 else out


def grad_wrt_weights(params, x):
    """Gradient of ``f(x; W)`` in ``W``: row ``j`` is ``a_j phi'(<w_j, x>) x``."""
    x = _check_x(params, x)
    if x.ndim != 1:
        raise DimensionError("grad_wrt_weights takes a single input vector")
    d = params.a * slrelu_prime(params.W @ x, params.act)
    return np.outer(d, x)


# --- checkpoint files ----------------------------------------------------

PARAMS_MAGIC = b"BNET"
PARAMS_VERSION = 1
_NET_HEADER = struct.Struct("<4sIQQdd")


def save_params(params, path):
    with open(path, "wb") as fh:
        fh.write(_NET_HEADER.pack(PARAMS_MAGIC, PARAMS_VERSION, params.m, params.p,
                                  params.act.gamma, params.act.H))
        fh.write(params.signs.astype("i1").tobytes())
        fh.write(params.W.astype("<f8").tobytes(order="C"))


def load_params(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _NET_HEADER.size:
        raise ConfigurationError(f"{path}: truncated checkpoint")
    magic, version, m, p, gamma, H = _NET_HEADER.unpack_from(raw)
    if magic != PARAMS_MAGIC:
        raise ConfigurationError(f"{path}: bad magic {magic!r}")
    if version != PARAMS_VERSION:
        raise ConfigurationError(f"{path}: unsupported version {version}")
    off = _NET_HEADER.size
    if len(raw) != off + m + 8 * m * p:
        raise ConfigurationError(f"{path}: size does not match header")
    signs = np.frombuffer(raw, "i1", m, off)
    W = np.frombuffer(raw, "<f8", m * p, off + m).reshape(m, p).astype(np.float64)
    return NetParams(W, signs_to_a(signs), ActivationSpec(gamma, H))
