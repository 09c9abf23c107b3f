"""Experiment configuration read from INI-style ``key = value`` files.

Example::

    [problem]
    kind = ssp            # generic | ssp | polyak | gne
    seed = 207            # generator seed when no model file is given
    states = 3
    actions = 2
    branching = 2

    [schedule]
    alpha0 = 40
    beta0 = 20
    exponent_a = 1

    [run]
    horizon = 200000
    n_reps = 100
    base_seed = 0
    checkpoints = 30
    rate_window = 1.0     # number of final decades used by the rate fit
    output_dir = out/ssp
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

KINDS = ("generic", "ssp", "polyak", "gne")
OUTPUT_ENV = "TTSA_OUTPUT_DIR"

# per-kind problem keys and their defaults; None means "derive from the model"
PROBLEM_KEYS: dict[str, dict[str, object]] = {
    "generic": {"fx": 0.2, "fy": 0.1, "cx": 1.0, "gx": 0.5, "gy": 0.5, "cy": 0.0,
                "markov": 1.0, "noise_x": 1.0, "noise_y": 0.0},
    "ssp": {"states": 3, "actions": 2, "branching": None, "reference_state": None, "beta_prime": None},
    "polyak": {"states": 3, "actions": 2, "branching": None, "gamma": 0.8},
    "gne": {"players": 3, "action_dim": 2, "constraints": 2, "noise_scale": 1.0,
            "alpha_prime": None, "beta_prime": None},
}
_INT_KEYS = {"states", "actions", "branching", "reference_state", "players", "action_dim", "constraints"}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    alpha0: float
    beta0: float
    exponent_a: float
    horizon: int
    n_reps: int
    base_seed: int = 0
    checkpoints: int = 30
    rate_window: float = 1.0
    output_dir: str = "ttsa_out"
    model: str | None = None
    seed: int = 0
    x0: tuple[float, ...] | None = None
    y0: tuple[float, ...] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"must be one of {', '.join(KINDS)}, got {self.kind!r}", "kind")
        if not 0.5 < self.exponent_a <= 1.0:
            raise ConfigError(f"must lie in (0.5, 1], got {self.exponent_a}", "exponent_a")
        if not self.alpha0 > 0:
            raise ConfigError("must be positive", "alpha0")
        if not self.beta0 > 0:
            raise ConfigError("must be positive", "beta0")
        if self.horizon < 1000:
            raise ConfigError(f"must be at least 1000, got {self.horizon}", "horizon")
        if self.n_reps < 1:
            raise ConfigError("must be at least 1", "n_reps")
        if self.checkpoints < 5:
            raise ConfigError("need at least 5 checkpoints for a rate fit", "checkpoints")
        if not self.rate_window > 0:
            raise ConfigError("must be positive", "rate_window")

    def canonical(self) -> str:
        """Stable text form used for hashing (sorted, fully resolved)."""
        items = {
            "kind": self.kind, "alpha0": repr(float(self.alpha0)), "beta0": repr(float(self.beta0)),
            "exponent_a": repr(float(self.exponent_a)), "horizon": self.horizon, "n_reps": self.n_reps,
            "base_seed": self.base_seed, "checkpoints": self.checkpoints,
            "rate_window": repr(float(self.rate_window)), "model": self.model or "", "seed": self.seed,
            "x0": "" if self.x0 is None else ",".join(repr(v) for v in self.x0),
            "y0": "" if self.y0 is None else ",".join(repr(v) for v in self.y0),
        }
        items.update({f"param.{k}": repr(v) for k, v in self.params.items()})
        return "\n".join(f"{k}={items[k]}" for k in sorted(items))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def resolved_output_dir(self, env: dict | None = None) -> Path:
        env = os.environ if env is None else env
        return Path(env.get(OUTPUT_ENV) or self.output_dir)


def _get(section, key: str, conv, default=None, required: bool = False):
    if key not in section:
        if required:
            raise ConfigError("missing required field", key)
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r}: {exc}", key) from None


def _vector(raw: str) -> tuple[float, ...]:
    return tuple(float(t) for t in raw.replace(",", " ").split())


def _int(raw: str) -> int:
    """Integers, also written as ``2e5``."""
    try:
        return int(raw)
    except ValueError:
        v = float(raw)
        if not v.is_integer():
            raise ValueError("not an integer") from None
        return int(v)


def parse_config(text: str, base_dir: str | Path | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", "config") from None
    for name in ("problem", "schedule", "run"):
        if name not in cp:
            raise ConfigError("missing section", f"[{name}]")
    prob, sch, run = cp["problem"], cp["schedule"], cp["run"]
    kind = _get(prob, "kind", str, required=True)
    if kind not in KINDS:
        raise ConfigError(f"must be one of {', '.join(KINDS)}, got {kind!r}", "kind")
    known = set(PROBLEM_KEYS[kind]) | {"kind", "model", "seed", "x0", "y0"}
    unknown = sorted(set(prob) - known)
    if unknown:
        raise ConfigError(f"unknown key for kind {kind!r}", unknown[0])
    params = {}
    for key, default in PROBLEM_KEYS[kind].items():
        conv = int if key in _INT_KEYS else float
        params[key] = _get(prob, key, conv, default)
    model = _get(prob, "model", str)
    if model and base_dir is not None and not Path(model).is_absolute():
        model = str(Path(base_dir) / model)
    return ExperimentConfig(
        kind=kind,
        alpha0=_get(sch, "alpha0", float, required=True),
        beta0=_get(sch, "beta0", float, required=True),
        exponent_a=_get(sch, "exponent_a", float, required=True),
        horizon=_get(run, "horizon", _int, required=True),
        n_reps=_get(run, "n_reps", int, required=True),
        base_seed=_get(run, "base_seed", int, 0),
        checkpoints=_get(run, "checkpoints", int, 30),
        rate_window=_get(run, "rate_window", float, 1.0),
        output_dir=_get(run, "output_dir", str, "ttsa_out"),
        model=model,
        seed=_get(prob, "seed", int, 0),
        x0=_get(prob, "x0", _vector),
        y0=_get(prob, "y0", _vector),
        params=params,
    )


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file {str(p)!r}", "config")
    return parse_config(p.read_text(), base_dir=p.parent)
