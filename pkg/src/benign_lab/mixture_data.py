"""Noisy two-cluster Gaussian mixture data.

Clean samples are ``x = z + y_clean * mu`` with ``y_clean`` uniform on
{-1, +1} and ``z`` drawn from a product Gaussian with per-coordinate
variances at most one.  Observed labels are obtained by flipping clean
labels according to a noise policy; features are never touched by the
corruption step.
"""

import enum
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, DimensionError
from .rng import check_seed, stream


class ClusterLaw(str, enum.Enum):
    ISOTROPIC = "isotropic"
    DIAGONAL = "diagonal"


class NoisePolicy(str, enum.Enum):
    IID = "iid"
    FIXED_COUNT = "fixed-count"


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """Data-generating process.

    ``variances`` holds the per-coordinate cluster variances; ``None`` means
    the isotropic unit-variance law.  The strong-log-concavity constant and
    the second-moment constant are derived from it, see ``lam`` and
    ``kappa``.
    """

    mu: np.ndarray
    cluster: ClusterLaw = ClusterLaw.ISOTROPIC
    variances: Optional[np.ndarray] = None
    eta: float = 0.0
    noise_policy: NoisePolicy = NoisePolicy.IID

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        if mu.ndim != 1 or mu.size == 0:
            raise ConfigurationError("mu must be a non-empty vector")
        if not np.all(np.isfinite(mu)):
            raise ConfigurationError("mu must be finite")
        object.__setattr__(self, "mu", mu)
        try:
            cluster = ClusterLaw(self.cluster)
            policy = NoisePolicy(self.noise_policy)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        object.__setattr__(self, "cluster", cluster)
        object.__setattr__(self, "noise_policy", policy)

        p = mu.size
        if self.variances is None:
            var = np.ones(p)
        else:
            var = np.asarray(self.variances, dtype=np.float64)
            if var.ndim == 0:
                var = np.full(p, float(var))
        if var.shape != (p,):
            raise ConfigurationError(f"variances must have length p={p}")
        if not np.all(np.isfinite(var)) or np.any(var <= 0.0):
            raise ConfigurationError("cluster variances must be positive")
        if np.any(var > 1.0):
            # marginals must have sub-Gaussian norm at most one
            raise ConfigurationError("cluster variances must not exceed 1")
        if cluster is ClusterLaw.ISOTROPIC and np.ptp(var) != 0.0:
            raise ConfigurationError("isotropic cluster needs equal variances")
        object.__setattr__(self, "variances", var)

        eta = float(self.eta)
        if not 0.0 <= eta <= 1.0:
            raise ConfigurationError(f"noise rate must lie in [0, 1], got {eta}")
        object.__setattr__(self, "eta", eta)

    @classmethod
    def gaussian(cls, p, mu_norm_sq, eta=0.0, noise_policy="iid",
                 direction="e1", variances=None):
        """Build a spec with ``||mu||^2 = mu_norm_sq`` along ``direction``.

        ``direction`` is ``"e1"`` (first coordinate axis) or ``"ones"``
        (the normalized all-ones vector).
        """
        if isinstance(p, bool) or int(p) != p or p < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {p}")
        p = int(p)
        if mu_norm_sq < 0:
            raise ConfigurationError("mu_norm_sq must be non-negative")
        mu = np.zeros(p)
        if direction == "e1":
            mu[0] = math.sqrt(mu_norm_sq)
        elif direction == "ones":
            mu[:] = math.sqrt(mu_norm_sq / p)
        else:
            raise ConfigurationError(f"unknown mean direction {direction!r}")
        cluster = ClusterLaw.ISOTROPIC if variances is None else ClusterLaw.DIAGONAL
        return cls(mu=mu, cluster=cluster, variances=variances, eta=eta,
                   noise_policy=noise_policy)

    @property
    def p(self):
        return self.mu.size

    @property
    def mu_norm_sq(self):
        return float(self.mu @ self.mu)

    @property
    def lam(self):
        return 1.0 / float(np.max(self.variances))

    @property
    def kappa(self):
        return float(np.mean(self.variances))


class LabeledSample(NamedTuple):
    x: np.ndarray
    y: int
    y_clean: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled samples stored as arrays.

    ``X`` has one row per sample; ``y`` holds observed labels and
    ``y_clean`` the labels before corruption.
    """

    X: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError("features must be an (n, p) array")
        y = np.asarray(self.y).astype(np.int8)
        yc = np.asarray(self.y_clean).astype(np.int8)
        if y.shape != (X.shape[0],) or yc.shape != y.shape:
            raise DimensionError("label arrays must have one entry per sample")
        for lab in (y, yc):
            if not np.all(np.abs(lab) == 1):
                raise ConfigurationError("labels must be +1 or -1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_clean", yc)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def noisy_indices(self):
        return np.flatnonzero(self.y != self.y_clean)

    @property
    def clean_indices(self):
        return np.flatnonzero(self.y == self.y_clean)

    @property
    def samples(self):
        return [LabeledSample(self.X[i], int(self.y[i]), int(self.y_clean[i]))
                for i in range(self.n)]

    @cached_property
    def gram(self):
        """Pairwise inner products of the features."""
        return self.X @ self.X.T

    @cached_property
    def sq_norms(self):
        return np.einsum("ij,ij->i", self.X, self.X)

    def with_labels(self, y):
        return Dataset(self.X, y, self.y_clean, self.seed, dict(self.meta))

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.y_clean[idx], self.seed,
                       dict(self.meta))


def _draw_rows(spec, start, stop, seed, purpose):
    p = spec.p
    sd = np.sqrt(spec.variances)
    X = np.empty((stop - start, p))
    y = np.empty(stop - start, dtype=np.int8)
    for r, i in enumerate(range(start, stop)):
        gen = stream(seed, purpose, i)
        label = 1 if gen.integers(0, 2) else -1
        z = gen.standard_normal(p)
        if spec.cluster is ClusterLaw.DIAGONAL:
            z *= sd
        X[r] = z
        X[r] += label * spec.mu
        y[r] = label
    return X, y


def _check_count(n, name="n"):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ConfigurationError(f"{name} must be a positive integer, got {n}")
    return int(n)


def sample_clean(spec, n, seed):
    """Draw ``n`` clean samples; the noisy index set is empty."""
    n = _check_count(n)
    seed = check_seed(seed)
    X, y = _draw_rows(spec, 0, n, seed, "sample")
    return Dataset(X, y, y.copy(), seed)


def flip_count(eta, n):
    """Number of flips of the fixed-count policy, ``floor(eta * n)``."""
    # round first so 0.29 * 100 counts as 29, not 28
    return math.floor(round(eta * n, 9))


def _flip_mask(spec, n, seed, purposes):
    iid_purpose, fixed_purpose = purposes
    if spec.eta == 0.0:
        return np.zeros(n, dtype=bool)
    if spec.noise_policy is NoisePolicy.IID:
        return np.array([stream(seed, iid_purpose, i).random() < spec.eta
                         for i in range(n)], dtype=bool)
    k = flip_count(spec.eta, n)
    if k > n:
        raise ConfigurationError(f"cannot flip {k} of {n} labels")
    mask = np.zeros(n, dtype=bool)
    if k:
        mask[stream(seed, fixed_purpose).choice(n, size=k, replace=False)] = True
    return mask


def corrupt_labels(ds, spec, seed):
    """Flip labels of a clean dataset following ``spec.noise_policy``."""
    if ds.noisy_indices.size:
        raise ConfigurationError("dataset already carries corrupted labels")
    seed = check_seed(seed)
    mask = _flip_mask(spec, ds.n, seed, ("noise_iid", "noise_fixed"))
    y = np.where(mask, -ds.y_clean, ds.y_clean)
    out = ds.with_labels(y)
    out.meta["noise_seed"] = seed
    return out


def iter_test_batches(spec, n_test, seed, corrupted, chunk=1000):
    """Yield a fresh test batch in chunks of at most ``chunk`` rows.

    Concatenating the chunks gives exactly ``fresh_test_batch`` for any
    chunk size, because samples and flips use per-index streams.  The
    fixed-count policy needs the whole batch to choose flips, so it draws
    its mask once up front.
    """
    n_test = _check_count(n_test, "n_test")
    seed = check_seed(seed)
    mask = None
    if corrupted:
        mask = _flip_mask(spec, n_test, seed, ("test_noise", "test_noise"))
    for start in range(0, n_test, chunk):
        stop = min(start + chunk, n_test)
        X, yc = _draw_rows(spec, start, stop, seed, "test_sample")
        y = yc if mask is None else np.where(mask[start:stop], -yc, yc)
        yield Dataset(X, y, yc, seed)


def fresh_test_batch(spec, n_test, seed, corrupted=False):
    parts = list(iter_test_batches(spec, n_test, seed, corrupted, chunk=n_test))
    return parts[0]


# --- sample events -------------------------------------------------------

@dataclass
class EventResult:
    passed: Optional[bool]
    measured: float
    bound: float
    violations: list = field(default_factory=list)
    note: str = ""


@dataclass
class SampleFactsReport:
    events: dict
    C1: float
    c_prime: float
    delta: float
    min_C1: float

    @property
    def all_passed(self):
        return all(ev.passed is not False for ev in self.events.values())

    def as_dict(self):
        return {
            "C1": self.C1, "c_prime": self.c_prime, "delta": self.delta,
            "min_C1": self.min_C1, "all_passed": self.all_passed,
            "events": {k: {"passed": v.passed, "measured": v.measured,
                           "bound": v.bound,
                           "violations": [int(i) for i in v.violations[:50]],
                           "note": v.note}
                       for k, v in self.events.items()},
        }


def pair_scale(mu_norm_sq, p, n, delta):
    return mu_norm_sq + math.sqrt(p * math.log(n / delta))


def check_sample_facts(ds, spec, delta, C1, c_prime):
    """Evaluate the concentration events on a dataset: squared norms in a
    band around p, bounded cross inner products, clean and noisy alignment
    with the mean, and the noise fraction.

    Violation indices are 0-based row numbers.  ``min_C1`` is the smallest
    constant for which the norm band and cross-term events both hold.
    """
    if not 0.0 < delta < 1.0:
        raise ConfigurationError("delta must lie in (0, 1)")
    if ds.p != spec.p:
        raise DimensionError("dataset and spec dimensions differ")
    n, p = ds.n, ds.p
    mu2 = spec.mu_norm_sq
    sq = ds.sq_norms
    events = {}

    lo, hi = p / C1, C1 * p
    bad = np.flatnonzero((sq < lo) | (sq > hi))
    e1_need = float(np.max(np.maximum(p / sq, sq / p)))
    events["norm_band"] = EventResult(bad.size == 0, e1_need, C1, bad.tolist(),
                               "max(p/|x|^2, |x|^2/p)")

    scale = pair_scale(mu2, p, n, delta)
    if n >= 2:
        off = np.abs(ds.gram - np.diag(np.diag(ds.gram)))
        iu = np.triu_indices(n, 1)
        worst = float(off[iu].max())
        pairs = np.argwhere(np.triu(off > C1 * scale, 1))
        events["cross_terms"] = EventResult(pairs.size == 0, worst, C1 * scale,
                                   [tuple(map(int, pr)) for pr in pairs])
        e2_need = worst / scale
    else:
        events["cross_terms"] = EventResult(True, 0.0, C1 * scale, [], "no pairs")
        e2_need = 0.0

    proj = (ds.X @ spec.mu) * ds.y
    clean, noisy = ds.clean_indices, ds.noisy_indices
    if mu2 == 0.0:
        for name in ("clean_alignment", "noisy_alignment"):
            events[name] = EventResult(None, float("nan"), 0.0, [],
                                       "not applicable: mu = 0")
    else:
        dev_c = np.abs(proj[clean] - mu2)
        dev_n = np.abs(proj[noisy] + mu2)
        events["clean_alignment"] = EventResult(
            bool(np.all(dev_c <= mu2 / 2)),
            float(dev_c.max()) if dev_c.size else 0.0, mu2 / 2,
            clean[dev_c > mu2 / 2].tolist())
        events["noisy_alignment"] = EventResult(
            bool(np.all(dev_n <= mu2 / 2)),
            float(dev_n.max()) if dev_n.size else 0.0, mu2 / 2,
            noisy[dev_n > mu2 / 2].tolist())

    frac = noisy.size / n
    events["noise_fraction"] = EventResult(frac <= spec.eta + c_prime, frac,
                               spec.eta + c_prime)
    return SampleFactsReport(events, C1, c_prime, delta, max(e1_need, e2_need))


# --- binary dataset files ------------------------------------------------

DATASET_MAGIC = b"BLAB"
DATASET_VERSION = 1
_DS_HEADER = struct.Struct("<4sIQQ")


def save_dataset(ds, path):
    with open(path, "wb") as fh:
        fh.write(_DS_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, ds.n, ds.p))
        fh.write(ds.X.astype("<f8").tobytes(order="C"))
        fh.write(ds.y.astype("i1").tobytes())
        fh.write(ds.y_clean.astype("i1").tobytes())
        fh.write(struct.pack("<Q", ds.seed))


def load_dataset(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DS_HEADER.size:
        raise ConfigurationError(f"{path}: truncated dataset file")
    magic, version, n, p = _DS_HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise ConfigurationError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise ConfigurationError(f"{path}: unsupported version {version}")
    off = _DS_HEADER.size
    expected = off + 8 * n * p + 2 * n + 8
    if len(raw) != expected:
        raise ConfigurationError(f"{path}: expected {expected} bytes, got {len(raw)}")
    X = np.frombuffer(raw, "<f8", n * p, off).reshape(n, p).astype(np.float64)
    off += 8 * n * p
    y = np.frombuffer(raw, "i1", n, off).copy()
    yc = np.frombuffer(raw, "i1", n, off + n).copy()
    (seed,) = struct.unpack_from("<Q", raw, off + 2 * n)
    return Dataset(X, y, yc, seed)
