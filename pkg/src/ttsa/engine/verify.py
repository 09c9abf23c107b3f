"""Fixed-point solves and empirical checks of the contraction structure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import NotContracting, PropertyViolated
from ..geometry import MoreauEnvelope, NormSpec, moreau_eval
from .problem import FixedPointOracle, TtsProblem


def solve_x_star(problem: TtsProblem, y, tol: float = 1e-10, x0=None,
                 max_iter: int = 1_000_000) -> np.ndarray:
    """Fixed point of ``f_bar(., y)`` by plain iteration.

    Stops once ``||dx|| <= tol (1 - r) / r`` with ``r`` the observed step
    ratio (an a-posteriori error bound) and the residual is within ``tol``.
    Raises NotContracting if the ratio stays at or above one for 100 steps.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    x = np.zeros(problem.d1) if x0 is None else np.asarray(x0, dtype=float).reshape(-1).copy()
    norm = problem.norm_x
    prev = None
    stalled = 0
    for _ in range(max_iter):
        x_new = problem.f_bar(x, y)
        step = norm(x_new - x)
        x = x_new
        if step == 0.0:
            return x
        if prev is not None and prev > 0.0:
            r = step / prev
            stalled = stalled + 1 if r >= 1.0 else 0
            if stalled >= 100:
                raise NotContracting("fixed-point iteration did not contract over 100 steps")
            if r < 1.0 and step <= tol * (1.0 - r) / max(r, 1e-300):
                if norm(problem.f_bar(x, y) - x) <= tol:
                    return x
        prev = step
    raise NotContracting(f"no convergence within {max_iter} iterations")


def oracle_by_iteration(problem: TtsProblem, y_star, tol: float = 1e-12) -> FixedPointOracle:
    """Oracle whose ``x*(y)`` comes from ``solve_x_star`` row by row."""
    y_star = np.asarray(y_star, dtype=float).reshape(-1)

    def x_of_y(ys):
        ys = np.atleast_2d(ys)
        return np.stack([solve_x_star(problem, yr, tol) for yr in ys])

    return FixedPointOracle(x_of_y, y_star, x_of_y(y_star)[0])


@dataclass
class LipschitzReport:
    max_ratio: float
    bound: float
    pairs: int
    witness: tuple | None = None


def verify_xstar_lipschitz(problem: TtsProblem, y_pairs, L: float, lam: float,
                           x_star_of_y: Callable | None = None, tol: float = 1e-10
                           ) -> LipschitzReport:
    """Check ``||x*(y1) - x*(y2)|| <= L/(1-lam) ||y1 - y2|| + 2 tol`` on each pair."""
    bound = L / (1.0 - lam)
    solve = x_star_of_y or (lambda ys: np.stack([solve_x_star(problem, y, tol) for y in ys]))
    worst, witness = 0.0, None
    count = 0
    for y1, y2 in y_pairs:
        y1 = np.asarray(y1, dtype=float).reshape(-1)
        y2 = np.asarray(y2, dtype=float).reshape(-1)
        x1, x2 = solve(np.stack([y1, y2]))
        dx = problem.norm_x(x1 - x2)
        dy = problem.norm_y(y1 - y2)
        count += 1
        if dx > bound * dy + 2 * tol:
            raise PropertyViolated(f"x*(y) ratio {dx / dy:.6g} exceeds {bound:.6g}", (y1, y2))
        if dy > 0 and dx / dy > worst:
            worst, witness = dx / dy, (y1, y2)
    return LipschitzReport(worst, bound, count, witness)


def verify_contraction(fn: Callable, norm: NormSpec, pairs: int, rng: np.random.Generator,
                       dim: int | None = None, sampler: Callable | None = None,
                       batched: bool = False) -> float:
    """Largest observed ``||fn(x1) - fn(x2)|| / ||x1 - x2||``.

    This is a lower bound on the true Lipschitz factor. Points come from
    ``sampler(rng, n)`` (shape ``(n, dim)``) or default to mixed-scale
    Gaussians. ``batched`` means ``fn`` maps ``(n, dim)`` to ``(n, dim)``.
    """
    if sampler is None:
        if dim is None:
            raise ValueError("dim is required without a sampler")

        def sampler(r, n):
            scale = np.exp(r.uniform(-1.0, 2.0, size=(n, 1)))
            return r.standard_normal((n, dim)) * scale

    x1 = sampler(rng, pairs)
    x2 = sampler(rng, pairs)
    if batched:
        f1, f2 = fn(x1), fn(x2)
    else:
        f1 = np.stack([fn(x) for x in x1])
        f2 = np.stack([fn(x) for x in x2])
    num = np.asarray(norm(f1 - f2))
    den = np.asarray(norm(x1 - x2))
    keep = den > 0
    return float(np.max(num[keep] / den[keep]))


def lyapunov_trace(problem: TtsProblem, oracle: FixedPointOracle, env_x: MoreauEnvelope,
                   env_y: MoreauEnvelope, trajectory) -> np.ndarray:
    """``A(x_n - x*(y_n)) + B(y_n - y*)`` for each ``(x_n, y_n)`` in ``trajectory``.

    ``trajectory`` is an iterable of pairs, or arrays ``(xs, ys)`` of shape
    ``(n, d1)`` and ``(n, d2)``.
    """
    if isinstance(trajectory, tuple) and len(trajectory) == 2 and np.ndim(trajectory[0]) == 2:
        xs, ys = (np.asarray(a, dtype=float) for a in trajectory)
    else:
        pairs = list(trajectory)
        xs = np.stack([np.asarray(p[0], dtype=float).reshape(-1) for p in pairs])
        ys = np.stack([np.asarray(p[1], dtype=float).reshape(-1) for p in pairs])
    dx = xs - oracle.x_star_of_y(ys)
    dy = ys - oracle.y_star
    return np.asarray(moreau_eval(env_x, dx)[0]) + np.asarray(moreau_eval(env_y, dy)[0])


def martingale_mean_check(noise_fn: Callable, x, y, z, z_next_sampler: Callable,
                          rng_factory: Callable, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Empirical mean and standard error of a noise generator at fixed ``(x, y, z)``.

    Test helper for the caller obligation that noise is conditionally centred.
    ``z_next_sampler(n)`` returns ``n`` successor states; ``rng_factory(n)``
    returns a ``BatchRandom`` of ``n`` rows.
    """
    xb = np.tile(np.asarray(x, dtype=float).reshape(1, -1), (n, 1))
    yb = np.tile(np.asarray(y, dtype=float).reshape(1, -1), (n, 1))
    zb = np.full(n, int(z))
    samples = noise_fn(xb, yb, zb, z_next_sampler(n), rng_factory(n))
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / np.sqrt(n)
