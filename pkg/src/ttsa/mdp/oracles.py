"""Exact dynamic-programming oracles for average-cost and discounted MDPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NoConvergence, Unreachable
from .model import MdpModel

VI_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class AvgCostSolution:
    rho_star: float
    q_star: np.ndarray  # (S*U,), pinned so that min_v q_star(i0, v) = 0
    reference_state: int


@dataclass(frozen=True)
class DiscountedSolution:
    gamma: float
    q_star: np.ndarray


@dataclass(frozen=True)
class SspWeights:
    weights: np.ndarray  # 1 / kappa
    kappa: np.ndarray
    lambda0: float


def truncated_kernel(mdp: MdpModel, i0: int) -> np.ndarray:
    """``p(j | i, u)`` with transitions into ``i0`` removed, shape ``(S*U, S)``."""
    Pt = mdp.flat_kernel.copy()
    Pt[:, i0] = 0.0
    return Pt


def _reaches_under_every_policy(mdp: MdpModel, i0: int) -> bool:
    """Attractor of ``i0``: grow the set by states whose every action enters it with positive probability."""
    inside = np.zeros(mdp.n_states, dtype=bool)
    inside[i0] = True
    while True:
        enters = (mdp.kernel[:, :, inside].sum(axis=2) > 0).all(axis=1)
        grown = inside | enters
        if grown.sum() == inside.sum():
            return bool(grown.all())
        inside = grown


def ssp_weights(mdp: MdpModel, i0: int, tol: float = 1e-13) -> SspWeights:
    """Weights making the truncated Bellman operator a weighted max-norm contraction.

    ``kappa(i,u) = 1 + sum_{j != i0} p(j|i,u) max_v kappa(j,v)`` is the
    worst-case expected number of steps until ``i0`` is hit (plus one);
    ``w = 1 / kappa`` and the contraction factor is ``max (kappa - 1) / kappa``.
    """
    S, U = mdp.n_states, mdp.n_actions
    if not _reaches_under_every_policy(mdp, i0):
        raise Unreachable(f"state {i0} is not reachable under every policy")
    Pt = truncated_kernel(mdp, i0)
    kappa = np.ones(S * U)
    for _ in range(VI_MAX_ITER):
        new = 1.0 + Pt @ kappa.reshape(S, U).max(axis=1)
        if not np.all(np.isfinite(new)) or new.max() > 1e12:
            raise Unreachable(f"state {i0} is not reachable under every policy")
        done = np.max(np.abs(new - kappa)) <= tol * new.max()
        kappa = new
        if done:
            break
    else:
        raise Unreachable(f"hitting-time recursion for state {i0} did not settle")
    lam0 = float(np.max((kappa - 1.0) / kappa))
    w = 1.0 / kappa
    for a in (w, kappa):
        a.setflags(write=False)
    return SspWeights(w, kappa, lam0)


def ssp_q_of_rho(mdp: MdpModel, i0: int, rho, weights: SspWeights | None = None,
                 q0=None, tol: float = 1e-13) -> np.ndarray:
    """Fixed points ``Q*(rho)`` of ``Q = k - rho + P_trunc min_v Q`` for a batch of ``rho``.

    ``rho`` has shape ``(R,)`` or ``(R, 1)``; returns ``(R, S*U)``. Value
    iteration stops on the a-posteriori bound ``lam0/(1-lam0) ||dQ||_w <= tol``.
    """
    S, U = mdp.n_states, mdp.n_actions
    ws = weights or ssp_weights(mdp, i0)
    rho = np.asarray(rho, dtype=float).reshape(-1, 1)
    Pt = truncated_kernel(mdp, i0)
    base = mdp.cost.reshape(1, -1) - rho
    Q = np.zeros((rho.shape[0], S * U)) if q0 is None else np.array(q0, dtype=float).reshape(rho.shape[0], -1)
    factor = ws.lambda0 / (1.0 - ws.lambda0) if ws.lambda0 > 0 else 0.0
    scale = max(1.0, float(np.max(np.abs(base))))
    for _ in range(VI_MAX_ITER):
        new = base + Q.reshape(-1, S, U).min(axis=2) @ Pt.T
        step = np.max(np.abs(new - Q) * ws.weights)
        Q = new
        if factor * step <= tol * scale or step == 0.0:
            return Q
    raise NoConvergence("SSP value iteration did not converge")


def avgcost_oracle(mdp: MdpModel, i0: int = 0, tol: float = 1e-13,
                   max_bisections: int = 200) -> AvgCostSolution:
    """Optimal average cost by bisection on the non-increasing map
    ``rho -> min_v Q*(rho)(i0, v)``, whose root is ``rho*``."""
    U = mdp.n_actions
    ws = ssp_weights(mdp, i0)

    def h(rho, q0=None):
        Q = ssp_q_of_rho(mdp, i0, [rho], ws, q0)[0]
        return float(Q[i0 * U:(i0 + 1) * U].min()), Q

    lo, hi = float(mdp.cost.min()) - 1.0, float(mdp.cost.max()) + 1.0
    h_lo, Q = h(lo)
    h_hi, _ = h(hi, Q)
    if h_lo < 0 or h_hi > 0:
        raise NoConvergence("average-cost root is not bracketed by the cost range")
    for _ in range(max_bisections):
        if hi - lo <= tol * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        h_mid, Q = h(mid, Q)
        if h_mid > 0:
            lo, h_lo = mid, h_mid
        elif h_mid < 0:
            hi, h_hi = mid, h_mid
        else:
            lo = hi = mid
            break
    else:
        raise NoConvergence("bisection budget exhausted")
    # secant inside the final bracket (h is linear there unless a kink sits inside)
    rho = lo if h_lo == h_hi else lo + h_lo * (hi - lo) / (h_lo - h_hi)
    rho = min(max(rho, lo), hi)
    _, Q = h(rho, Q)
    Q = Q.copy()
    Q.setflags(write=False)
    return AvgCostSolution(rho_star=rho, q_star=Q, reference_state=i0)


def ssp_bellman_residual(mdp: MdpModel, sol: AvgCostSolution) -> float:
    S, U = mdp.n_states, mdp.n_actions
    Pt = truncated_kernel(mdp, sol.reference_state)
    rhs = mdp.cost.ravel() - sol.rho_star + Pt @ sol.q_star.reshape(S, U).min(axis=1)
    return float(np.max(np.abs(sol.q_star - rhs)))


def discounted_bellman(mdp: MdpModel, gamma: float, Q: np.ndarray) -> np.ndarray:
    S, U = mdp.n_states, mdp.n_actions
    return mdp.cost.ravel() + gamma * (mdp.flat_kernel @ Q.reshape(S, U).min(axis=1))


def discounted_oracle(mdp: MdpModel, gamma: float, tol: float = 1e-10) -> DiscountedSolution:
    """Value iteration on ``Q = k + gamma P min_v Q`` until the residual is below ``tol / 10``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    Q = np.zeros(mdp.n_pairs)
    for _ in range(VI_MAX_ITER):
        new = discounted_bellman(mdp, gamma, Q)
        res = np.max(np.abs(new - Q))
        Q = new
        if res <= 0.1 * tol:
            break
    else:
        raise NoConvergence("discounted value iteration did not converge")
    Q.setflags(write=False)
    return DiscountedSolution(gamma, Q)


def h_map(mdp: MdpModel, i0: int, rhos, weights: SspWeights | None = None) -> np.ndarray:
    """``min_v Q*(rho)(i0, v)`` on a grid of ``rho`` values."""
    U = mdp.n_actions
    Q = ssp_q_of_rho(mdp, i0, np.asarray(rhos, dtype=float), weights)
    return Q[:, i0 * U:(i0 + 1) * U].min(axis=1)


def h_secants(mdp: MdpModel, i0: int, rhos, weights: SspWeights | None = None) -> np.ndarray:
    rhos = np.asarray(rhos, dtype=float)
    h = h_map(mdp, i0, rhos, weights)
    return np.diff(h) / np.diff(rhos)


def lp_average_cost(mdp: MdpModel) -> float:
    """Optimal average cost from the occupation-measure linear program.

    minimise sum k(i,u) x(i,u) subject to flow balance, sum x = 1, x >= 0.
    """
    from scipy.optimize import linprog

    S, U = mdp.n_states, mdp.n_actions
    P = mdp.flat_kernel  # (S*U, S)
    out_flow = np.repeat(np.eye(S), U, axis=1)  # sum_u x(j, u)
    A_eq = np.vstack([out_flow - P.T, np.ones((1, S * U))])
    b_eq = np.zeros(S + 1)
    b_eq[-1] = 1.0
    res = linprog(mdp.cost.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if not res.success:
        raise NoConvergence(f"average-cost LP failed: {res.message}")
    return float(res.fun)
