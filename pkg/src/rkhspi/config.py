"""Experiment configuration: a flat ``section.key = value`` text format.

Grammar, one entry per line::

    # comment
    problem.name = toy
    kernel.gamma_squared = 1.7
    output_dir = runs/toy

Blank lines and ``#`` comments are ignored.  Values are read as Python
literals (numbers, ``True``/``False``, ``None``, quoted strings); anything
that is not a literal is kept as a bare string.  Later lines override earlier
ones.  Unknown keys are an error.
"""

import ast
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from .kernels import KERNEL_NAMES
from .problems import PROBLEM_NAMES, TOY_POLICIES

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "parse_value",
    "load_config",
    "PRESETS",
    "preset",
]


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


@dataclass(frozen=True)
class ProblemSection:
    name: str = "toy"
    n_nodes: Optional[int] = None
    initial_policy: Optional[str] = None


@dataclass(frozen=True)
class KernelSection:
    name: str = "gaussian"
    gamma: Optional[float] = None
    gamma_squared: Optional[float] = None


@dataclass(frozen=True)
class TrainSection:
    kind: str = "grid"
    size: int = 100
    seed: int = 0


@dataclass(frozen=True)
class TestSection:
    size: int = 100
    seed: int = 1


@dataclass(frozen=True)
class GreedySection:
    max_centers: int = 300
    target_residual: float = 1e-5
    batch: int = 1


@dataclass(frozen=True)
class PISection:
    epsilon: float = 1e-7
    max_iters: int = 10


@dataclass(frozen=True)
class VerificationSection:
    mode: str = "auto-lqr"
    alpha: Optional[float] = None
    beta: Optional[float] = None


_SECTIONS = {
    "problem": ProblemSection,
    "kernel": KernelSection,
    "train": TrainSection,
    "test": TestSection,
    "greedy": GreedySection,
    "pi": PISection,
    "verification": VerificationSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSection = field(default_factory=ProblemSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    train: TrainSection = field(default_factory=TrainSection)
    test: TestSection = field(default_factory=TestSection)
    greedy: GreedySection = field(default_factory=GreedySection)
    pi: PISection = field(default_factory=PISection)
    verification: VerificationSection = field(default_factory=VerificationSection)
    jitter: object = "auto"
    output_dir: str = "rkhspi-output"

    def __post_init__(self):
        _validate(self)

    @classmethod
    def from_mapping(cls, flat):
        """Build from ``{"section.key": value}``; missing keys take defaults."""
        sections = {name: {} for name in _SECTIONS}
        top = {}
        for key, value in flat.items():
            if "." in key:
                sec, _, sub = key.partition(".")
                if sec not in _SECTIONS:
                    raise ConfigError(f"unknown section {sec!r} in key {key!r}")
                names = {f.name for f in fields(_SECTIONS[sec])}
                if sub not in names:
                    raise ConfigError(f"unknown key {key!r}; section {sec!r} accepts {', '.join(sorted(names))}")
                sections[sec][sub] = value
            elif key in ("jitter", "output_dir"):
                top[key] = value
            else:
                raise ConfigError(f"unknown key {key!r}")
        try:
            built = {name: _SECTIONS[name](**vals) for name, vals in sections.items()}
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**built, **top)

    def to_mapping(self):
        """Flat ``{"section.key": value}`` echo of every effective parameter."""
        out = {}
        for name in _SECTIONS:
            for key, value in asdict(getattr(self, name)).items():
                out[f"{name}.{key}"] = value
        out["jitter"] = self.jitter
        out["output_dir"] = self.output_dir
        return out

    def with_overrides(self, flat):
        merged = self.to_mapping()
        # setting one form of the shape parameter clears the other
        for key, other in (("kernel.gamma", "kernel.gamma_squared"), ("kernel.gamma_squared", "kernel.gamma")):
            if key in flat and other not in flat:
                merged[other] = None
        merged.update(flat)
        return ExperimentConfig.from_mapping(merged)

    @property
    def gamma(self):
        k = self.kernel
        return float(k.gamma) if k.gamma is not None else math.sqrt(float(k.gamma_squared))

    @property
    def jitter_value(self):
        if self.jitter in ("auto", None):
            return "auto"
        if self.jitter == "none":
            return 0.0
        return float(self.jitter)


def _positive(value, name, kind=float):
    try:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0
    except TypeError:
        ok = False
    if not ok or (kind is int and int(value) != value):
        raise ConfigError(f"{name} must be a positive {'integer' if kind is int else 'number'}, got {value!r}")


def _validate(cfg):
    p = cfg.problem
    if p.name not in PROBLEM_NAMES:
        raise ConfigError(f"unknown problem {p.name!r}; valid options: {', '.join(PROBLEM_NAMES)}")
    if p.n_nodes is not None:
        _positive(p.n_nodes, "problem.n_nodes", int)
    if p.initial_policy is not None and p.initial_policy not in TOY_POLICIES:
        raise ConfigError(f"problem.initial_policy must be one of {', '.join(TOY_POLICIES)}")
    k = cfg.kernel
    if k.name not in KERNEL_NAMES:
        raise ConfigError(f"unknown kernel {k.name!r}; valid options: {', '.join(KERNEL_NAMES)}")
    if (k.gamma is None) == (k.gamma_squared is None):
        raise ConfigError("give exactly one of kernel.gamma and kernel.gamma_squared")
    _positive(k.gamma if k.gamma is not None else k.gamma_squared, "kernel.gamma")
    if cfg.train.kind not in ("grid", "uniform"):
        raise ConfigError("train.kind must be 'grid' or 'uniform'")
    _positive(cfg.train.size, "train.size", int)
    _positive(cfg.test.size, "test.size", int)
    _positive(cfg.greedy.max_centers, "greedy.max_centers", int)
    _positive(cfg.greedy.batch, "greedy.batch", int)
    tr = cfg.greedy.target_residual
    if not isinstance(tr, (int, float)) or isinstance(tr, bool) or tr < 0:
        raise ConfigError("greedy.target_residual must be a nonnegative number")
    _positive(cfg.pi.epsilon, "pi.epsilon")
    _positive(cfg.pi.max_iters, "pi.max_iters", int)
    v = cfg.verification
    if v.mode not in ("psd", "bounds", "auto-lqr"):
        raise ConfigError("verification.mode must be 'psd', 'bounds' or 'auto-lqr'")
    if v.mode == "bounds":
        _positive(v.alpha, "verification.alpha")
        _positive(v.beta, "verification.beta")
        if v.alpha > v.beta:
            raise ConfigError("verification.alpha must not exceed verification.beta")
    if cfg.jitter not in ("auto", "none"):
        if not isinstance(cfg.jitter, (int, float)) or isinstance(cfg.jitter, bool) or cfg.jitter < 0:
            raise ConfigError("jitter must be 'auto', 'none' or a nonnegative number")
    if not isinstance(cfg.output_dir, str) or not cfg.output_dir:
        raise ConfigError("output_dir must be a nonempty path")


def parse_value(text):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config(text):
    """Parse config text into a flat ``{"section.key": value}`` dict."""
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key or any(ch.isspace() for ch in key):
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        flat[key] = parse_value(value)
    return flat


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_mapping(parse_config(text))


def _heat(name, kernel, gamma, n_nodes, size, max_centers, target):
    return ExperimentConfig(
        problem=ProblemSection(name, n_nodes=n_nodes),
        kernel=KernelSection(kernel, gamma=gamma),
        train=TrainSection("uniform", size, 0),
        greedy=GreedySection(max_centers, target, 1),
        pi=PISection(1e-6, 10),
    )


_SQRT6E_5 = math.sqrt(6) * 1e-5

PRESETS = {
    "toy": ExperimentConfig(
        problem=ProblemSection("toy"),
        kernel=KernelSection("gaussian", gamma_squared=1.7),
    ),
    "toy-quad": ExperimentConfig(
        problem=ProblemSection("toy"),
        kernel=KernelSection("gaussian-quad", gamma_squared=1.7),
    ),
    "vdp": ExperimentConfig(
        problem=ProblemSection("vdp"),
        kernel=KernelSection("gaussian", gamma_squared=1.7),
        pi=PISection(1e-6, 10),
    ),
    "vdp-quad": ExperimentConfig(
        problem=ProblemSection("vdp"),
        kernel=KernelSection("gaussian-quad", gamma_squared=1.1),
        pi=PISection(1e-6, 10),
    ),
    "heat-linear": _heat("heat-linear", "linear-matern-quad", 5e-8, 50, 100_000, 1500, 1e-8),
    "heat-linear-gauss": _heat("heat-linear", "gaussian", _SQRT6E_5, 50, 100_000, 1500, 1e-8),
    "heat-nonlinear": _heat("heat-nonlinear", "linear-matern-quad", 4e-8, 50, 100_000, 1500, 1e-8),
    "heat-nonlinear-gauss": _heat("heat-nonlinear", "gaussian", _SQRT6E_5, 50, 100_000, 1500, 1e-8),
    "heat-linear-desk": _heat("heat-linear", "linear-matern-quad", 5e-8, 10, 2000, 80, 0.0),
}


def preset(name):
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; valid options: {', '.join(PRESETS)}") from None
    return replace(cfg, output_dir=f"rkhspi-output/{name}")
