"""Simulation of the coupled iteration

    x_{n+1} = x_n + alpha_n (f(x_n, y_n, Z_n) - x_n + M_{n+1})
    y_{n+1} = y_n + beta_n  (g(x_n, y_n, Z_n) - y_n + M'_{n+1})

with ``g`` replaced by ``g_bar`` and ``M' = 0`` for slow-noiseless problems.
Replications are simulated together as rows of one batch; each row draws
from its own random streams seeded by ``base_seed + rep``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, NonFiniteIterate
from ..geometry import MoreauEnvelope, moreau_eval
from ..markov_chain import next_states
from .problem import FixedPointOracle, TtsProblem
from .schedule import StepSchedule

DIVERGENCE_LIMIT = 1e12
BLOCK = 2048


class _Stream:
    def __init__(self, gens, draw):
        self._gens = gens
        self._draw = draw
        self._buf = np.empty((len(gens), 0))
        self._pos = 0

    def take(self, k: int) -> np.ndarray:
        if self._pos + k > self._buf.shape[1]:
            rest = self._buf[:, self._pos:]
            size = max(BLOCK, k)
            fresh = np.stack([self._draw(g, size) for g in self._gens])
            self._buf = np.concatenate([rest, fresh], axis=1)
            self._pos = 0
        out = self._buf[:, self._pos:self._pos + k]
        self._pos += k
        return out


class BatchRandom:
    """Per-replication random streams, buffered in fixed-size blocks.

    Each seed spawns three independent generators (chain uniforms, noise
    normals, noise uniforms). Row ``r`` of every draw depends only on
    ``seeds[r]``, never on the batch composition.
    """

    def __init__(self, seeds: Sequence[int]):
        self.seeds = [int(s) for s in seeds]
        children = [np.random.SeedSequence(s).spawn(3) for s in self.seeds]
        self._chain = _Stream([np.random.default_rng(c[0]) for c in children],
                              lambda g, n: g.random(n))
        self._normal = _Stream([np.random.default_rng(c[1]) for c in children],
                               lambda g, n: g.standard_normal(n))
        self._uniform = _Stream([np.random.default_rng(c[2]) for c in children],
                                lambda g, n: g.random(n))

    @property
    def size(self) -> int:
        return len(self.seeds)

    def chain_uniform(self) -> np.ndarray:
        return self._chain.take(1)[:, 0]

    def normal(self, k: int) -> np.ndarray:
        """Standard normals, shape ``(R, k)``."""
        return self._normal.take(k)

    def uniform(self, k: int) -> np.ndarray:
        return self._uniform.take(k)

    def sphere(self, k: int) -> np.ndarray:
        """Uniform points on the unit sphere of ``R^k``, shape ``(R, k)``."""
        v = self.normal(k)
        return v / np.sqrt(np.sum(v * v, axis=1, keepdims=True))


@dataclass
class ReplicationResult:
    seed: int
    checkpoints: np.ndarray
    err_x_sq: np.ndarray
    err_y_sq: np.ndarray
    err_track_sq: np.ndarray
    lyapunov: np.ndarray | None = None
    extra: dict = field(default_factory=dict)
    x: np.ndarray | None = None  # iterates at checkpoints, (n_ck, d1)
    y: np.ndarray | None = None


def log_checkpoints(horizon: int, count: int = 30, start: int = 100) -> np.ndarray:
    """Log-spaced integer checkpoints in ``[start, horizon]``, duplicates dropped."""
    start = max(1, min(start, horizon))
    pts = np.unique(np.rint(np.geomspace(start, horizon, count)).astype(np.int64))
    return pts


def _prepare(problem: TtsProblem, x0, y0, R: int):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if x0.size != problem.d1 or y0.size != problem.d2:
        raise DimensionMismatch(
            f"initial point has sizes ({x0.size}, {y0.size}), "
            f"problem expects ({problem.d1}, {problem.d2})"
        )
    return np.tile(x0, (R, 1)), np.tile(y0, (R, 1))


class _Recorder:
    def __init__(self, problem, oracle, envs, checkpoints, R):
        self.problem = problem
        self.oracle = oracle
        self.envs = envs
        n = len(checkpoints)
        self.err_x = np.full((R, n), np.nan)
        self.err_y = np.full((R, n), np.nan)
        self.err_track = np.full((R, n), np.nan)
        self.lyap = np.full((R, n), np.nan) if envs is not None else None
        self.extra = {k: np.full((R, n), np.nan) for k in problem.metrics}
        self.xs = np.empty((n, R, problem.d1))
        self.ys = np.empty((n, R, problem.d2))

    def __call__(self, k: int, x: np.ndarray, y: np.ndarray) -> None:
        p, o = self.problem, self.oracle
        self.xs[k] = x
        self.ys[k] = y
        for name, fn in p.metrics.items():
            self.extra[name][:, k] = fn(x, y)
        if o is None:
            return
        self.err_x[:, k] = np.asarray(p.norm_x(x - o.x_star)) ** 2
        self.err_y[:, k] = np.asarray(p.norm_y(y - o.y_star)) ** 2
        dx = x - o.x_star_of_y(y)
        self.err_track[:, k] = np.asarray(p.norm_x(dx)) ** 2
        if self.envs is not None:
            env_x, env_y = self.envs
            self.lyap[:, k] = moreau_eval(env_x, dx)[0] + moreau_eval(env_y, y - o.y_star)[0]


def simulate_batch(
    problem: TtsProblem,
    schedule: StepSchedule,
    x0,
    y0,
    z0: int,
    horizon: int,
    checkpoints,
    seeds: Sequence[int],
    oracle: FixedPointOracle | None = None,
    envelopes: tuple[MoreauEnvelope, MoreauEnvelope] | None = None,
) -> list[ReplicationResult]:
    """Run one batch of replications; row ``r`` uses ``seeds[r]``."""
    ck = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if ck.size == 0 or ck[0] < 0 or ck[-1] > horizon:
        raise ValueError("checkpoints must lie in [0, horizon]")
    R = len(seeds)
    x, y = _prepare(problem, x0, y0, R)
    z = np.full(R, int(z0), dtype=np.intp)
    if not 0 <= z0 < problem.n_states:
        raise IndexError(f"z0={z0} out of range")
    rnd = BatchRandom(seeds)
    rec = _Recorder(problem, oracle, envelopes, ck, R)
    alphas = schedule.alpha(np.arange(horizon))
    betas = schedule.beta(np.arange(horizon))
    f, chain = problem.f, problem.chain
    slow = problem.g_bar if problem.slow_noiseless else None
    g = problem.g
    noise_x, noise_y = problem.noise_x, problem.noise_y

    k = 0
    for n in range(horizon + 1):
        if n == ck[k]:
            rec(k, x, y)
            k += 1
            if k == ck.size:
                break
        a = alphas[n]
        b = betas[n]
        fx = f(x, y, z)
        gy = slow(x, y) if slow is not None else g(x, y, z)
        z_next = next_states(chain, z, rnd.chain_uniform()) if chain is not None else z
        if noise_x is not None:
            x_new = x + a * (fx - x + noise_x(x, y, z, z_next, rnd))
        else:
            x_new = x + a * (fx - x)
        if noise_y is not None:
            y_new = y + b * (gy - y + noise_y(x, y, z, z_next, rnd))
        else:
            y_new = y + b * (gy - y)
        if not (np.abs(x_new).max() <= DIVERGENCE_LIMIT and np.abs(y_new).max() <= DIVERGENCE_LIMIT):
            bad = ~(np.all(np.abs(x_new) <= DIVERGENCE_LIMIT, axis=1)
                    & np.all(np.abs(y_new) <= DIVERGENCE_LIMIT, axis=1))
            r = int(np.flatnonzero(bad)[0])
            raise NonFiniteIterate(
                f"iterate diverged at step {n + 1} (seed {rnd.seeds[r]})",
                step=n + 1, seed=rnd.seeds[r],
            )
        x, y, z = x_new, y_new, z_next

    out = []
    for r, seed in enumerate(rnd.seeds):
        out.append(ReplicationResult(
            seed=seed,
            checkpoints=ck.copy(),
            err_x_sq=rec.err_x[r],
            err_y_sq=rec.err_y[r],
            err_track_sq=rec.err_track[r],
            lyapunov=None if rec.lyap is None else rec.lyap[r],
            extra={name: v[r] for name, v in rec.extra.items()},
            x=rec.xs[:, r, :].copy(),
            y=rec.ys[:, r, :].copy(),
        ))
    return out


def tts_run(
    problem: TtsProblem,
    schedule: StepSchedule,
    x0,
    y0,
    z0: int = 0,
    horizon: int = 1000,
    checkpoints=None,
    seed: int = 0,
    oracle: FixedPointOracle | None = None,
    envelopes: tuple[MoreauEnvelope, MoreauEnvelope] | None = None,
) -> ReplicationResult:
    """Single replication; identical to row ``seed`` of a batched run."""
    if checkpoints is None:
        checkpoints = log_checkpoints(horizon)
    return simulate_batch(problem, schedule, x0, y0, z0, horizon, checkpoints,
                          [seed], oracle, envelopes)[0]


@dataclass
class ReplicationSummary:
    checkpoints: np.ndarray
    results: list[ReplicationResult]  # ordered by replication index
    reps: list[int]
    alpha: np.ndarray
    beta: np.ndarray

    def series(self, name: str) -> np.ndarray:
        """Per-replication values of one error series, shape ``(n_reps, n_ck)``."""
        if name in ("err_x_sq", "err_y_sq", "err_track_sq", "lyapunov"):
            return np.stack([getattr(r, name) for r in self.results])
        return np.stack([r.extra[name] for r in self.results])

    def mean(self, name: str) -> np.ndarray:
        vals = self.series(name)
        total = np.zeros(vals.shape[1])
        for row in vals:  # sequential reduce in replication order
            total = total + row
        return total / vals.shape[0]

    def stderr(self, name: str) -> np.ndarray:
        vals = self.series(name)
        if vals.shape[0] < 2:
            return np.full(vals.shape[1], np.nan)
        dev = vals - self.mean(name)
        total = np.zeros(vals.shape[1])
        for row in dev:
            total = total + row * row
        return np.sqrt(total / (vals.shape[0] - 1) / vals.shape[0])


def run_replications(
    problem: TtsProblem,
    schedule: StepSchedule,
    init,
    horizon: int,
    checkpoints,
    n_reps: int,
    base_seed: int = 0,
    oracle: FixedPointOracle | None = None,
    envelopes: tuple[MoreauEnvelope, MoreauEnvelope] | None = None,
    reps: Sequence[int] | None = None,
    batch_size: int | None = None,
) -> ReplicationSummary:
    """Run ``n_reps`` independent replications; replication ``r`` uses seed ``base_seed + r``.

    ``init`` is ``(x0, y0)`` or ``(x0, y0, z0)``. ``reps`` optionally lists
    the replication indices in the order they are simulated; results are
    always reduced in increasing index order.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    x0, y0, *rest = init
    z0 = rest[0] if rest else 0
    order = list(range(n_reps)) if reps is None else [int(r) for r in reps]
    if sorted(order) != list(range(n_reps)):
        raise ValueError("reps must be a permutation of range(n_reps)")
    size = batch_size or len(order)
    by_rep: dict[int, ReplicationResult] = {}
    for start in range(0, len(order), size):
        chunk = order[start:start + size]
        results = simulate_batch(problem, schedule, x0, y0, z0, horizon, checkpoints,
                                 [base_seed + r for r in chunk], oracle, envelopes)
        by_rep.update(zip(chunk, results))
    ordered = [by_rep[r] for r in range(n_reps)]
    ck = ordered[0].checkpoints
    return ReplicationSummary(
        checkpoints=ck, results=ordered, reps=list(range(n_reps)),
        alpha=schedule.alpha(ck), beta=schedule.beta(ck),
    )
