"""Flat ``key = value`` experiment configuration files.

Lines starting with ``#`` are comments. Lists are comma separated. Unknown
keys are rejected so that typos do not silently fall back to defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..cg_core import BetaScheme
from ..errors import InvalidParameterError

CONFIG_HEADER = "# distcg-config v1"
ALGORITHMS = ("dcgrad", "diging_atc", "abm", "c_admm", "ab_push_pull")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to replay an experiment.

    ``max_iter`` caps both tuning evaluations and the final runs.
    ``gammas`` is the ABm momentum grid and ``beta_caps`` is the grid of clamps tried for DC-Grad's beta; an empty
    grid means ``beta_scheme`` is used as given.
    """

    family: str = "ls"
    n_agents: int = 50
    dim: int = 10
    m_min: int = 5
    m_max: int = 30
    xi: float = 1.0
    kappas: tuple = (0.48, 0.80, 0.97, 1.00)
    trials: int = 20
    tol: float = 1e-13
    max_iter: int = 10_000
    algorithms: tuple = ALGORITHMS
    beta_scheme: str = "fletcher_reeves"
    beta_caps: tuple = (0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5)
    gammas: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    tune_budget: int = 30
    mixing: str = "metropolis"
    seed: int = 0
    trace_trial: int = 0

    def __post_init__(self):
        if self.family not in ("ls", "huber"):
            raise InvalidParameterError(f"family must be ls or huber, got {self.family!r}")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise InvalidParameterError(f"unknown algorithm {algo!r}")
        if self.mixing not in ("metropolis", "laplacian"):
            raise InvalidParameterError(f"unknown mixing {self.mixing!r}")
        if self.trials < 1 or self.n_agents < 1 or self.dim < 1:
            raise InvalidParameterError("trials, n_agents and dim must be positive")
        if not self.kappas:
            raise InvalidParameterError("kappas must not be empty")
        BetaScheme.parse(self.beta_scheme)

    @classmethod
    def huber_defaults(cls, **overrides):
        base = dict(family="huber", kappas=(1.0,), max_iter=3000, beta_scheme="pr_plus",
                    algorithms=("dcgrad", "diging_atc", "abm", "ab_push_pull"))
        base.update(overrides)
        return cls(**base)

    def with_overrides(self, **kw):
        return replace(self, **kw)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def _fmt(value):
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _convert(name, text, default):
    text = text.strip()
    try:
        if isinstance(default, tuple):
            if not text:
                return ()
            parts = [p.strip() for p in text.split(",")]
            if default and isinstance(default[0], float) or name in ("kappas", "beta_caps", "gammas"):
                return tuple(float(p) for p in parts)
            return tuple(parts)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise InvalidParameterError(f"bad value for {name}: {text!r}") from exc


def parse_config(text: str) -> ExperimentConfig:
    defaults = dict(ExperimentConfig().items())
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidParameterError(f"line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in defaults:
            raise InvalidParameterError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, val, defaults[key])
    if values.get("family") == "huber":
        return ExperimentConfig.huber_defaults(**values)
    return ExperimentConfig(**values)


def format_config(cfg: ExperimentConfig) -> str:
    lines = [CONFIG_HEADER] + [f"{k} = {_fmt(v)}" for k, v in cfg.items()]
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def save_config(cfg: ExperimentConfig, path):
    Path(path).write_text(format_config(cfg))
