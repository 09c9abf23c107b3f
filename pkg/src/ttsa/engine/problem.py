"""Problem and oracle containers for coupled two-time-scale iterations.

All maps work on batches: ``x`` has shape ``(R, d1)``, ``y`` ``(R, d2)`` and
the chain state ``z`` ``(R,)`` (one row per replication). Rows never interact,
so a replication's trajectory does not depend on which batch it ran in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DimensionMismatch
from ..geometry import NormSpec
from ..markov_chain import FiniteMarkovChain

# noise(x, y, z, z_next, rng) -> (R, d); rng is a BatchRandom
NoiseFn = Callable[..., np.ndarray]


@dataclass(frozen=True)
class TtsProblem:
    d1: int
    d2: int
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None
    chain: FiniteMarkovChain | None = None
    noise_x: NoiseFn | None = None
    noise_y: NoiseFn | None = None
    norm_x: NormSpec = field(default_factory=NormSpec.euclidean)
    norm_y: NormSpec = field(default_factory=NormSpec.euclidean)
    slow_noiseless: bool = False
    g_bar: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    # name -> fn(x, y) -> (R,) evaluated at checkpoints alongside the errors
    metrics: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise DimensionMismatch("dimensions must be positive")
        if self.slow_noiseless:
            if self.g_bar is None:
                raise ValueError("slow_noiseless problems need g_bar")
            if self.noise_y is not None:
                raise ValueError("slow_noiseless problems carry no slow-scale noise")
            if self.g is None:
                g_bar = self.g_bar
                object.__setattr__(self, "g", lambda x, y, z: g_bar(x, y))
        elif self.g is None:
            raise ValueError("g is required unless slow_noiseless is set")

    @property
    def n_states(self) -> int:
        return 1 if self.chain is None else self.chain.n_states

    @property
    def pi(self) -> np.ndarray:
        return np.ones(1) if self.chain is None else self.chain.pi

    def _average(self, fn, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        R, S = x.shape[0], self.n_states
        xs = np.repeat(x, S, axis=0)
        ys = np.repeat(y, S, axis=0)
        zs = np.tile(np.arange(S), R)
        vals = fn(xs, ys, zs).reshape(R, S, -1)
        return np.einsum("s,rsd->rd", self.pi, vals)

    def f_bar(self, x, y):
        """``sum_i pi(i) f(x, y, i)``; same shape as ``x``."""
        single = np.ndim(x) == 1
        out = self._average(self.f, x, y)
        return out[0] if single else out

    def g_bar_eval(self, x, y):
        single = np.ndim(x) == 1
        if self.g_bar is not None:
            out = self.g_bar(np.atleast_2d(x), np.atleast_2d(y))
        else:
            out = self._average(self.g, x, y)
        return out[0] if single else out

    def as_general(self) -> TtsProblem:
        """The same problem routed through the general driver (g := g_bar, M' = 0)."""
        if not self.slow_noiseless:
            return self
        g_bar = self.g_bar
        return TtsProblem(
            d1=self.d1, d2=self.d2, f=self.f,
            g=lambda x, y, z: g_bar(x, y),
            chain=self.chain, noise_x=self.noise_x, noise_y=None,
            norm_x=self.norm_x, norm_y=self.norm_y, slow_noiseless=False,
            metrics=self.metrics, info=self.info,
        )


@dataclass(frozen=True)
class FixedPointOracle:
    """``x_star_of_y`` maps a batch ``(R, d2)`` to ``(R, d1)``."""

    x_star_of_y: Callable[[np.ndarray], np.ndarray]
    y_star: np.ndarray
    x_star: np.ndarray

    def residuals(self, problem: TtsProblem, ys) -> tuple[float, float]:
        """``max ||f_bar(x*(y), y) - x*(y)||`` over ``ys`` and ``||g_bar(x*, y*) - y*||``."""
        ys = np.atleast_2d(ys)
        xs = self.x_star_of_y(ys)
        track = problem.norm_x(problem.f_bar(xs, ys) - xs)
        slow = problem.norm_y(problem.g_bar_eval(self.x_star, self.y_star) - self.y_star)
        return float(np.max(track)), float(slow)
