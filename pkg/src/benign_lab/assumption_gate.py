"""Audit an experiment configuration against the six standing assumptions.

Each assumption is a single inequality scaled by the constant ``C``.  The
report gives required and actual values, the slack ratio actual/required,
and the largest ``C`` for which all of them would hold.
"""

import math
from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    description: str
    kind: str          # "lower": actual >= required, "upper": actual <= required
    required: float
    actual: float
    slack: float
    satisfied: bool
    max_C: float       # largest C for which this check would pass

    def as_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple
    C: float
    delta: float
    largest_C: float

    @property
    def all_passed(self):
        return all(c.satisfied for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {"C": self.C, "delta": self.delta, "largest_C": self.largest_C,
                "all_passed": self.all_passed,
                "checks": {c.name: c.as_dict() for c in self.checks}}

    def table(self):
        rows = [("id", "assumption", "required", "actual", "slack", "ok")]
        for c in self.checks:
            op = ">=" if c.kind == "lower" else "<="
            rows.append((c.name, c.description, f"{op} {c.required:.6g}",
                         f"{c.actual:.6g}", f"{c.slack:.6g}",
                         "pass" if c.satisfied else "FAIL"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append(f"C = {self.C:g}, delta = {self.delta:g}; "
                     f"largest C passing all: {_fmt_C(self.largest_C)}")
        return "\n".join(lines)


def _fmt_C(v):
    if v == math.inf:
        return "unbounded"
    if v <= 0:
        return "none (fails for every C > 0)"
    return f"{v:.6g}"


def _lower(name, desc, actual, unit, C):
    # actual >= C * unit
    required = C * unit
    slack = actual / required if required > 0 else math.inf
    max_C = actual / unit if unit > 0 else math.inf
    return AssumptionCheck(name, desc, "lower", required, actual, slack,
                           actual >= required, max_C)


def _upper(name, desc, actual, required, max_C):
    slack = actual / required if required > 0 else math.inf
    return AssumptionCheck(name, desc, "upper", required, actual, slack,
                           actual <= required, max_C)


def check_assumptions(n, p, mu_norm_sq, eta, alpha, omega, m, H, delta=0.05, C=1.0):
    """Evaluate the six assumptions for one configuration.

    Lower-bound checks pass when slack >= 1, upper-bound checks when
    slack <= 1.  Raises ``ConfigurationError`` for delta outside (0, 1/2)
    or non-finite inputs.
    """
    vals = dict(n=n, p=p, mu_norm_sq=mu_norm_sq, eta=eta, alpha=alpha, omega=omega,
                m=m, H=H, delta=delta, C=C)
    for k, v in vals.items():
        if not math.isfinite(v):
            raise ConfigurationError(f"{k} must be finite, got {v}")
    if not 0.0 < delta < 0.5:
        raise ConfigurationError(f"delta must lie in (0, 1/2), got {delta}")
    if not C > 0:
        raise ConfigurationError(f"C must be positive, got {C}")
    if n < 1 or p < 1 or m < 1 or H <= 0:
        raise ConfigurationError("n, p, m must be >= 1 and H > 0")
    if mu_norm_sq < 0 or eta < 0 or alpha <= 0 or omega < 0:
        raise ConfigurationError("mu_norm_sq, eta, omega must be >= 0 and alpha > 0")

    log_nd = math.log(n / delta)
    width = max(1.0, H / math.sqrt(m))
    a1 = _lower("A1", "n >= C log(1/delta)", n, math.log(1.0 / delta), C)
    a2 = _lower("A2", "p >= C max(n |mu|^2, n^2 log(n/delta))", p,
                max(n * mu_norm_sq, n * n * log_nd), C)
    a3 = _lower("A3", "|mu|^2 >= C log(n/delta)", mu_norm_sq, log_nd, C)
    a4 = _upper("A4", "eta <= 1/C", eta, 1.0 / C, 1.0 / eta if eta > 0 else math.inf)
    a5_cap = 1.0 / (C * width * p * p)
    a5 = _upper("A5", "alpha <= 1/(C max(1, H/sqrt(m)) p^2)", alpha, a5_cap,
                1.0 / (alpha * width * p * p))
    # A6 does not involve C: it either holds for all C or for none
    a6_actual = omega * math.sqrt(m * p)
    a6 = _upper("A6", "omega sqrt(m p) <= alpha", a6_actual, alpha,
                math.inf if a6_actual <= alpha else 0.0)
    checks = (a1, a2, a3, a4, a5, a6)
    return AssumptionReport(checks, float(C), float(delta), min(c.max_C for c in checks))


def implied_caps(n, p, mu_norm_sq, m, H, delta=0.05, C=1.0):
    """Hyperparameter ceilings implied by the assumptions at this ``C``:
    the largest step size, noise rate and initialization scale, and the
    smallest ``p`` and ``|mu|^2``."""
    log_nd = math.log(n / delta)
    alpha = 1.0 / (C * max(1.0, H / math.sqrt(m)) * p * p)
    return {
        "alpha_max": alpha,
        "omega_max": alpha / math.sqrt(m * p),
        "eta_max": 1.0 / C,
        "p_min": C * max(n * mu_norm_sq, n * n * log_nd),
        "mu_norm_sq_min": C * log_nd,
        "n_min": C * math.log(1.0 / delta),
    }
