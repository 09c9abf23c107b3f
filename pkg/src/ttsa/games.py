"""Quadratic games with linear coupling constraints and a two-time-scale GNE learner.

The joint gradient operator is ``F(x) = -M x + c`` over the stacked action
``x`` of length ``K*d``; the coupling constraint is ``A x = b`` and ``y`` is
its Lagrange multiplier. The learner runs gradient play on the fast scale and
dual ascent on the constraint violation on the slow scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine.problem import FixedPointOracle, TtsProblem
from .errors import DimensionMismatch, SingularSystem
from .geometry import NormSpec

log = logging.getLogger(__name__)

_EIG_TOL = 1e-12


def _sym_min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Strongly monotone quadratic game; ``lambda0`` and ``ell`` default to the tightest values."""

    n_players: int
    action_dim: int
    M: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lambda0: float | None = None
    ell: float | None = None
    sigma_min_A: float = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n_players * self.action_dim
        M = np.array(self.M, dtype=float)
        c = np.array(self.c, dtype=float).reshape(-1)
        A = np.atleast_2d(np.array(self.A, dtype=float))
        b = np.array(self.b, dtype=float).reshape(-1)
        if self.n_players < 1 or self.action_dim < 1:
            raise DimensionMismatch("need at least one player and one action coordinate")
        if M.shape != (n, n) or c.shape != (n,):
            raise DimensionMismatch(f"M must be {n}x{n} and c of length {n}")
        if A.ndim != 2 or A.shape[1] != n or b.shape != (A.shape[0],):
            raise DimensionMismatch(f"A must have {n} columns and b one entry per row of A")
        lam_min = _sym_min_eig(M)
        op_norm = float(np.linalg.norm(M, 2))
        lam0 = lam_min if self.lambda0 is None else float(self.lambda0)
        ell = op_norm if self.ell is None else float(self.ell)
        if not lam0 > 0:
            raise ValueError("game is not strongly monotone: need lambda0 > 0")
        if lam_min < lam0 * (1 - _EIG_TOL):
            raise ValueError(f"symmetric part of M has eigenvalue {lam_min:.6g} < lambda0={lam0:.6g}")
        if op_norm > ell * (1 + _EIG_TOL):
            raise ValueError(f"||M||={op_norm:.6g} exceeds ell={ell:.6g}")
        sv = np.linalg.svd(A, compute_uv=False)
        if A.shape[0] > n or sv.min() <= 1e-12 * max(1.0, sv.max()):
            raise SingularSystem("constraint matrix A must have full row rank")
        for a in (M, c, A, b):
            a.setflags(write=False)
        for name, v in (("M", M), ("c", c), ("A", A), ("b", b), ("lambda0", lam0), ("ell", ell),
                        ("sigma_min_A", float(sv.min()))):
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return self.n_players * self.action_dim

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def F(self, x) -> np.ndarray:
        """Joint gradient operator; ``x`` may be ``(Kd,)`` or a batch ``(R, Kd)``."""
        x = np.asarray(x, dtype=float)
        return self.c - np.einsum("ij,...j->...i", self.M, x)


def random_game(n_players: int, action_dim: int, n_constraints: int, rng: np.random.Generator,
                skew: float = 0.3, curvature: float = 0.5) -> GameSpec:
    """Seeded game with ``M = I + curvature*PSD + skew*antisymmetric`` (spectral norms).

    The identity part makes the symmetric part of ``M`` at least ``I``; rows of
    ``A`` are unit vectors, which keeps ``A A^T`` well conditioned.
    """
    n = n_players * action_dim
    G = rng.standard_normal((n, n))
    P = G @ G.T
    P /= np.linalg.norm(P, 2)
    W = rng.standard_normal((n, n))
    W = W - W.T
    if n > 1:
        W /= np.linalg.norm(W, 2)
    M = np.eye(n) + curvature * P + skew * W
    A = rng.standard_normal((n_constraints, n))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    return GameSpec(n_players, action_dim, M, rng.standard_normal(n), A, rng.standard_normal(n_constraints))


@dataclass(frozen=True)
class KktSolution:
    x_star: np.ndarray
    y_star: np.ndarray


def x_star_of_y(game: GameSpec, ys) -> np.ndarray:
    """Nash equilibrium for multiplier ``y``: the solution of ``F(x) = A^T y``, batched over rows."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    rhs = game.c[None, :] - ys @ game.A
    return np.linalg.solve(game.M, rhs.T).T


def kkt_oracle(game: GameSpec) -> KktSolution:
    """Solve ``-M x + c = A^T y``, ``A x = b`` by eliminating ``x``.

    With ``x = M^{-1}(c - A^T y)`` the multiplier solves the Schur system
    ``(A M^{-1} A^T) y = A M^{-1} c - b``; one refinement step on the full
    system cleans up the rounding of the two solves.
    """
    M, A, b, c = game.M, game.A, game.b, game.c
    try:
        Minv_At = np.linalg.solve(M, A.T)
        Minv_c = np.linalg.solve(M, c)
        S = A @ Minv_At
        y = np.linalg.solve(S, A @ Minv_c - b)
        x = Minv_c - Minv_At @ y
        for _ in range(2):
            r1 = c - M @ x - A.T @ y
            r2 = b - A @ x
            # correction (dx, dy) of the same block system with residual right-hand side
            Minv_r1 = np.linalg.solve(M, r1)
            dy = np.linalg.solve(S, A @ Minv_r1 - r2)
            x = x + Minv_r1 - Minv_At @ dy
            y = y + dy
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"KKT elimination failed: {exc}") from exc
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise SingularSystem("KKT elimination produced non-finite values")
    x.setflags(write=False)
    y.setflags(write=False)
    return KktSolution(x, y)


def kkt_residuals(game: GameSpec, sol: KktSolution) -> tuple[float, float]:
    """``(||A x* - b||_2, ||F(x*) - A^T y*||_2)``."""
    return (float(np.linalg.norm(game.A @ sol.x_star - game.b)),
            float(np.linalg.norm(game.F(sol.x_star) - game.A.T @ sol.y_star)))


def constraint_violation(game: GameSpec, x) -> float | np.ndarray:
    """``||A x - b||_2^2``; a batch ``(R, Kd)`` gives ``(R,)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != game.dim:
        raise DimensionMismatch(f"expected {game.dim} action coordinates, got {x.shape[-1]}")
    r = np.einsum("ij,...j->...i", game.A, x) - game.b
    out = np.einsum("...i,...i->...", r, r)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GneConstants:
    alpha_prime: float
    beta_prime: float
    lam: float
    mu: float
    mu0: float
    ell0: float
    L_f: float
    L_g: float


def gne_constants(game: GameSpec, alpha_prime: float | None = None,
                  beta_prime: float | None = None) -> GneConstants:
    """Gains and contraction factors of the rescaled maps ``f`` and ``g``.

    Defaults are ``alpha' = lambda0/ell^2`` and ``beta' = mu0/ell0^2``. For
    general gains the factors are ``sqrt(1 - 2 a m + a^2 L^2)``, which reduce
    to ``sqrt(1 - m^2/L^2)`` at the default ``a = m/L^2``.
    """
    lam0, ell = game.lambda0, game.ell
    ap = lam0 / ell**2 if alpha_prime is None else float(alpha_prime)
    if not ap > 0:
        raise ValueError("alpha_prime must be positive")
    lam = float(np.sqrt(max(0.0, 1.0 - 2.0 * ap * lam0 + ap**2 * ell**2)))
    norm_A = float(np.linalg.norm(game.A, 2))
    L_f = 1.0 + ap * ell + ap * norm_A  # ||B|| = ||A^T|| = ||A||
    # ||(A A^T)^{-1} A||_2 is the reciprocal of the smallest singular value of A
    mu0 = lam0 * game.sigma_min_A**2 / ell**2
    ell0 = norm_A * L_f / (1.0 - lam) if lam < 1 else np.inf
    bp = mu0 / ell0**2 if beta_prime is None else float(beta_prime)
    if not bp > 0:
        raise ValueError("beta_prime must be positive")
    mu = float(np.sqrt(max(0.0, 1.0 - 2.0 * bp * mu0 + bp**2 * ell0**2)))
    return GneConstants(ap, bp, lam, mu, mu0, float(ell0), L_f, 1.0 + bp * norm_A)


def gne_oracle(game: GameSpec, sol: KktSolution | None = None) -> FixedPointOracle:
    sol = sol or kkt_oracle(game)
    return FixedPointOracle(lambda ys: x_star_of_y(game, ys), np.array(sol.y_star), np.array(sol.x_star))


def make_gne_problem(game: GameSpec, alpha_prime: float | None = None, beta_prime: float | None = None,
                     noise_scale: float = 1.0) -> TtsProblem:
    """Rescaled learner ``f = x + a'(F(x) - A^T y)``, ``g = y + b'(A x - b)``, no Markov chain.

    Each player sees its gradient plus noise uniform on a sphere of radius
    ``noise_scale``; the constraint-violation signal carries one shared noise
    draw of the same scale. Noise is multiplied by ``a'`` and ``b'`` to match
    the rescaled step sizes.
    """
    if noise_scale < 0:
        raise ValueError("noise_scale must be nonnegative")
    k = gne_constants(game, alpha_prime, beta_prime)
    if k.lam >= 1.0:
        log.warning("alpha_prime=%g: contraction bound %.6f is not below 1", k.alpha_prime, k.lam)
    if k.mu >= 1.0:
        log.warning("beta_prime=%g: slow contraction bound %.6f is not below 1", k.beta_prime, k.mu)
    M, A, c, b = game.M, game.A, game.c, game.b
    ap, bp = k.alpha_prime, k.beta_prime
    n, m = game.dim, game.n_constraints
    sol = kkt_oracle(game)
    x_star = np.array(sol.x_star)

    def f(x, y, z):
        return x + ap * (c - np.einsum("ij,rj->ri", M, x) - np.einsum("ji,rj->ri", A, y))

    def g(x, y, z):
        return y + bp * (np.einsum("ij,rj->ri", A, x) - b)

    noise_x = noise_y = None
    if noise_scale > 0:
        def noise_x(x, y, z, z_next, rnd):
            return (ap * noise_scale) * rnd.sphere(n)

        def noise_y(x, y, z, z_next, rnd):
            return (bp * noise_scale) * rnd.sphere(m)

    def gne_error(x, y):
        d = x - x_star
        return constraint_violation(game, x) + np.einsum("ri,ri->r", d, d)

    return TtsProblem(
        d1=n, d2=m, f=f, g=g, chain=None, noise_x=noise_x, noise_y=noise_y,
        norm_x=NormSpec.euclidean(), norm_y=NormSpec.euclidean(),
        metrics={"gne_error": gne_error, "constraint_violation": lambda x, y: constraint_violation(game, x)},
        info={"kind": "gne", "alpha_prime": ap, "beta_prime": bp, "lambda": k.lam, "mu": k.mu,
              "mu0": k.mu0, "ell0": k.ell0, "L": max(k.L_f, k.L_g), "noise_scale": noise_scale},
    )


def playerwise_step(game: GameSpec, x, y, alpha_n: float, beta_n: float, noise_x=None, noise_y=None):
    """One learner step computed player by player in index order.

    Player ``k`` only touches its own block of ``x``, using its rows of
    ``M``, ``c`` and ``A^T`` (the un-rescaled gains ``alpha_n``, ``beta_n``
    already include ``a'`` and ``b'``). Batched over leading rows.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    d = game.action_dim
    x_new = np.empty_like(x)
    for k in range(game.n_players):
        blk = slice(k * d, (k + 1) * d)
        grad = game.c[blk] - np.einsum("ij,rj->ri", game.M[blk], x)
        coupling = np.einsum("ji,rj->ri", game.A[:, blk], y)
        step = grad - coupling
        if noise_x is not None:
            step = step + noise_x[:, blk]
        x_new[:, blk] = x[:, blk] + alpha_n * step
    viol = np.einsum("ij,rj->ri", game.A, x) - game.b
    if noise_y is not None:
        viol = viol + noise_y
    return x_new, y + beta_n * viol


def stacked_step(game: GameSpec, x, y, alpha_n: float, beta_n: float, noise_x=None, noise_y=None):
    """The same step written for the whole action vector at once."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    step = game.c - np.einsum("ij,rj->ri", game.M, x) - np.einsum("ji,rj->ri", game.A, y)
    if noise_x is not None:
        step = step + noise_x
    viol = np.einsum("ij,rj->ri", game.A, x) - game.b
    if noise_y is not None:
        viol = viol + noise_y
    return x + alpha_n * step, y + beta_n * viol


def _numbers(path) -> list[str]:
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    return tokens


def load_game(path) -> GameSpec:
    """Whitespace-separated ``K d c_rows`` followed by ``M``, ``c``, ``A``, ``b`` in row-major order."""
    tok = _numbers(path)
    if len(tok) < 3:
        raise DimensionMismatch(f"{path}: missing header")
    K, d, m = (int(t) for t in tok[:3])
    n = K * d
    vals = np.array([float(t) for t in tok[3:]])
    need = n * n + n + m * n + m
    if vals.size != need:
        raise DimensionMismatch(f"{path}: expected {need} numbers after the header, found {vals.size}")
    M = vals[:n * n].reshape(n, n)
    c = vals[n * n:n * n + n]
    A = vals[n * n + n:n * n + n + m * n].reshape(m, n)
    b = vals[n * n + n + m * n:]
    return GameSpec(K, d, M, c, A, b)


def save_game(game: GameSpec, path) -> None:
    def line(v):
        return " ".join(repr(float(t)) for t in np.ravel(v)) + "\n"

    with open(path, "w") as fh:
        fh.write(f"{game.n_players} {game.action_dim} {game.n_constraints}\n")
        for row in game.M:
            fh.write(line(row))
        fh.write(line(game.c))
        for row in game.A:
            fh.write(line(row))
        fh.write(line(game.b))
