"""Run and sweep configuration: INI text with fixed sections and keys.

Unknown sections or keys are errors.  Floats are written with ``repr`` so
``parse(serialize(cfg)) == cfg`` holds exactly.
"""

import configparser
import itertools
import math
import os
from dataclasses import dataclass, field, fields, replace

from ..errors import ConfigurationError
from ..gd_trainer import Engine, StopRule
from ..mixture_data import NoisePolicy

OUTPUT_ENV = "BENIGN_LAB_OUTPUT"


@dataclass(frozen=True)
class DataConfig:
    n: int = 32
    p: int = 16384
    mu_norm_sq: float = 64.0
    eta: float = 0.1
    noise_policy: str = "fixed-count"
    direction: str = "e1"
    variance: float = 1.0          # common per-coordinate variance

    def validate(self):
        _positive_int(self, "n", "p")
        if not self.mu_norm_sq >= 0:
            raise ConfigurationError("data.mu_norm_sq must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError("data.eta must lie in [0, 1]")
        _choice(self, "noise_policy", [e.value for e in NoisePolicy])
        _choice(self, "direction", ["e1", "ones"])
        if not 0.0 < self.variance <= 1.0:
            raise ConfigurationError("data.variance must lie in (0, 1]")


@dataclass(frozen=True)
class NetworkConfig:
    m: int = 64
    gamma: float = 0.5
    H: float = 2.0
    omega_init: float = 1e-6
    # "fixed": use omega_init; "theory": alpha / sqrt(m p)
    omega_rule: str = "fixed"

    def validate(self):
        _positive_int(self, "m")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("network.gamma must lie in (0, 1]")
        if not self.H > 0:
            raise ConfigurationError("network.H must be positive")
        if not self.omega_init >= 0:
            raise ConfigurationError("network.omega_init must be >= 0")
        _choice(self, "omega_rule", ["fixed", "theory"])


@dataclass(frozen=True)
class TrainSection:
    # "fixed": alpha as given; "inverse_p": alpha / p; "theory": the
    # step-size cap at constant diagnostics.C
    alpha_rule: str = "inverse_p"
    alpha: float = 0.5
    stop: str = "loss"
    # "fixed": eps as given; "inverse_2n": 1 / (2n)
    eps_rule: str = "inverse_2n"
    eps: float = 0.0
    max_iter: int = 200_000
    stride: int = 1
    engine: str = "gram"
    divergence_factor: float = 10.0

    def validate(self):
        _choice(self, "alpha_rule", ["fixed", "inverse_p", "theory"])
        _choice(self, "eps_rule", ["fixed", "inverse_2n"])
        _choice(self, "stop", [e.value for e in StopRule])
        _choice(self, "engine", [e.value for e in Engine])
        if self.alpha_rule != "theory" and not self.alpha > 0:
            raise ConfigurationError("train.alpha must be positive")
        if self.max_iter < 0 or self.stride < 1:
            raise ConfigurationError("train.max_iter must be >= 0 and train.stride >= 1")
        if not self.divergence_factor > 1:
            raise ConfigurationError("train.divergence_factor must exceed 1")


@dataclass(frozen=True)
class DiagnosticsConfig:
    C: float = 1.0
    C0: float = 2.0
    C1: float = 10.0
    c: float = 1.0
    c_prime: float = 0.1
    delta: float = 0.05
    witness: bool = True
    exp_ratio_check: bool = True       # only evaluated for stride-1 records
    margin_tol: float = 1e-9
    eval_every: int = 0                # 0: evaluate test quantities at the end only
    n_test: int = 20_000
    n_test_trace: int = 2_000
    test_chunk: int = 1000
    band_below: float = 0.03
    band_above: float = 0.05
    checkpoints: bool = True
    blas_threads: int = 1

    def validate(self):
        for k in ("C", "C0", "C1", "c", "c_prime"):
            if not getattr(self, k) > 0:
                raise ConfigurationError(f"diagnostics.{k} must be positive")
        if not 0.0 < self.delta < 0.5:
            raise ConfigurationError("diagnostics.delta must lie in (0, 1/2)")
        if self.eval_every < 0 or self.blas_threads < 1:
            raise ConfigurationError("diagnostics.eval_every >= 0, blas_threads >= 1")
        _positive_int(self, "n_test", "n_test_trace", "test_chunk")


@dataclass(frozen=True)
class SeedConfig:
    data: int = 0
    noise: int = 0
    init: int = 0
    signs: int = 0
    test: int = 99

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0 <= v < 2 ** 64:
                raise ConfigurationError(f"seeds.{f.name} must lie in [0, 2^64)")

    def shifted(self, k):
        return SeedConfig(*(getattr(self, f.name) + k for f in fields(self)))


@dataclass(frozen=True)
class OutputConfig:
    name: str = "run"
    dir: str = ""          # empty: <$BENIGN_LAB_OUTPUT or ./runs>/<name>

    def validate(self):
        if not self.name or os.sep in self.name:
            raise ConfigurationError("output.name must be a plain non-empty name")

    def resolve(self):
        if self.dir:
            return os.path.abspath(self.dir)
        return os.path.abspath(os.path.join(os.environ.get(OUTPUT_ENV, "runs"), self.name))


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainSection = field(default_factory=TrainSection)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self):
        for f in fields(self):
            getattr(self, f.name).validate()
        return self

    # derived hyperparameters
    def resolved_alpha(self):
        t, d = self.train, self.data
        if t.alpha_rule == "fixed":
            return t.alpha
        if t.alpha_rule == "inverse_p":
            return t.alpha / d.p
        return 1.0 / (self.diagnostics.C * max(1.0, self.network.H / math.sqrt(self.network.m))
                      * d.p ** 2)

    def resolved_omega(self):
        if self.network.omega_rule == "fixed":
            return self.network.omega_init
        return self.resolved_alpha() / math.sqrt(self.network.m * self.data.p)

    def resolved_eps(self):
        if self.train.eps_rule == "inverse_2n":
            return 1.0 / (2 * self.data.n)
        return self.train.eps

    def with_values(self, **kw):
        """Copy with dotted overrides such as ``data__n=64``."""
        out = self
        for key, v in kw.items():
            sec, name = key.split("__")
            out = replace(out, **{sec: replace(getattr(out, sec), **{name: v})})
        return out


SWEEP_AXES = {
    "n": "data__n", "p": "data__p", "mu_norm_sq": "data__mu_norm_sq", "eta": "data__eta",
    "alpha": "train__alpha", "m": "network__m", "seed": None,
}


@dataclass(frozen=True)
class SweepGrid:
    base: RunConfig
    axes: tuple = ()             # ((axis name, (values...)), ...) in file order
    reps: int = 1
    budget: int = 1000
    workers: int = 1

    def validate(self):
        self.base.validate()
        for name, vals in self.axes:
            if name not in SWEEP_AXES:
                raise ConfigurationError(f"unknown sweep axis {name!r}")
            if not vals:
                raise ConfigurationError(f"sweep axis {name!r} has no values")
        if self.reps < 1 or self.workers < 1:
            raise ConfigurationError("sweep.reps and sweep.workers must be >= 1")
        if self.total_runs() > self.budget:
            raise ConfigurationError(
                f"sweep has {self.total_runs()} runs, budget is {self.budget}")
        return self

    def n_cells(self):
        return math.prod(len(v) for _, v in self.axes) if self.axes else 1

    def total_runs(self):
        return self.n_cells() * self.reps

    def cells(self):
        """Yield ``(cell_index, {axis: value})`` in row-major order."""
        names = [a for a, _ in self.axes]
        for k, combo in enumerate(itertools.product(*(v for _, v in self.axes))):
            yield k, dict(zip(names, combo))

    def cell_config(self, values, rep):
        cfg = self.base
        seeds = cfg.seeds
        for name, v in values.items():
            if name == "seed":
                seeds = SeedConfig(v, v, v, v, v)
            else:
                cfg = cfg.with_values(**{SWEEP_AXES[name]: v})
        return replace(cfg, seeds=seeds.shifted(rep))


# --- INI text --------------------------------------------------------------

_SECTION_TYPES = {"data": DataConfig, "network": NetworkConfig, "train": TrainSection,
                  "diagnostics": DiagnosticsConfig, "seeds": SeedConfig,
                  "output": OutputConfig}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(cls, name, text):
    ftype = {f.name: f for f in fields(cls)}[name]
    default = ftype.default
    kind = type(default)
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {text!r}") from None


def _parser():
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def _read_sections(cp, allowed_extra=()):
    for sec in cp.sections():
        if sec not in _SECTION_TYPES and sec not in allowed_extra:
            raise ConfigurationError(f"unknown config section [{sec}]")
    parts = {}
    for sec, cls in _SECTION_TYPES.items():
        vals = {}
        if cp.has_section(sec):
            known = {f.name for f in fields(cls)}
            for key, text in cp.items(sec):
                if key not in known:
                    raise ConfigurationError(f"unknown key {key!r} in [{sec}]")
                vals[key] = _coerce(cls, key, text)
        parts[sec] = cls(**vals)
    return RunConfig(**parts).validate()


def parse_run_config(text):
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    if cp.has_section("sweep"):
        raise ConfigurationError("[sweep] section found; use the sweep command")
    return _read_sections(cp)


def serialize_run_config(cfg):
    lines = []
    for sec in _SECTION_TYPES:
        lines.append(f"[{sec}]")
        part = getattr(cfg, sec)
        for f in fields(part):
            lines.append(f"{f.name} = {_fmt(getattr(part, f.name))}")
        lines.append("")
    return "\n".join(lines)


def _parse_list(name, text):
    cls_axis = SWEEP_AXES[name]
    if cls_axis is None:
        conv = int
    else:
        sec, key = cls_axis.split("__")
        conv = lambda s: _coerce(_SECTION_TYPES[sec], key, s)
    items = [s for s in (t.strip() for t in text.split(",")) if s]
    return tuple(conv(s) for s in items)


def parse_sweep_config(text):
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    if not cp.has_section("sweep"):
        raise ConfigurationError("sweep config needs a [sweep] section")
    base = _read_sections(cp, allowed_extra=("sweep",))
    axes, opts = [], {}
    for key, text_v in cp.items("sweep"):
        if key in ("reps", "budget", "workers"):
            try:
                opts[key] = int(text_v)
            except ValueError:
                raise ConfigurationError(f"bad value for sweep.{key}: {text_v!r}") from None
        elif key in SWEEP_AXES:
            axes.append((key, _parse_list(key, text_v)))
        else:
            raise ConfigurationError(f"unknown key {key!r} in [sweep]")
    return SweepGrid(base, tuple(axes), **opts).validate()


def serialize_sweep_config(grid):
    lines = [serialize_run_config(grid.base), "[sweep]"]
    for name, vals in grid.axes:
        lines.append(f"{name} = {', '.join(_fmt(v) for v in vals)}")
    lines += [f"reps = {grid.reps}", f"budget = {grid.budget}", f"workers = {grid.workers}", ""]
    return "\n".join(lines)


def load_config(path, sweep=False):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_sweep_config(text) if sweep else parse_run_config(text)


def _positive_int(obj, *names):
    for k in names:
        v = getattr(obj, k)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigurationError(f"{k} must be a positive integer, got {v!r}")


def _choice(obj, name, options):
    if getattr(obj, name) not in options:
        raise ConfigurationError(f"{name} must be one of {options}, got {getattr(obj, name)!r}")
