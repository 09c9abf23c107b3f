"""SSP Q-learning and Polyak-averaged Q-learning as two-time-scale problems.

Both are asynchronous: only the coordinate of the current state-action pair
``Z_n`` moves at step ``n``, and the slow iterate is noiseless.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..engine.problem import FixedPointOracle, TtsProblem
from ..engine.schedule import StepSchedule
from ..geometry import NormSpec
from .model import MdpModel
from .oracles import (
    SspWeights,
    avgcost_oracle,
    discounted_oracle,
    h_secants,
    ssp_q_of_rho,
    ssp_weights,
    truncated_kernel,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SspConfig:
    reference_state: int
    beta_prime: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        if not self.beta_prime > 0:
            raise ValueError("beta_prime must be positive")


def rho_grid(mdp: MdpModel, rho_star: float, points: int = 20) -> np.ndarray:
    span = max(1.0, float(np.ptp(mdp.cost)))
    return np.linspace(rho_star - span, rho_star + span, points)


def slow_contraction_estimate(mdp: MdpModel, i0: int, beta_prime: float, rhos,
                              weights: SspWeights | None = None) -> float:
    """Largest secant factor of ``rho -> beta' min_v Q*(rho)(i0, v) + rho`` over all grid pairs."""
    rhos = np.asarray(rhos, dtype=float)
    U = mdp.n_actions
    Q = ssp_q_of_rho(mdp, i0, rhos, weights)
    gbar = beta_prime * Q[:, i0 * U:(i0 + 1) * U].min(axis=1) + rhos
    i, j = np.triu_indices(rhos.size, k=1)
    return float(np.max(np.abs(gbar[i] - gbar[j]) / np.abs(rhos[i] - rhos[j])))


def default_ssp_config(mdp: MdpModel, i0: int = 0, beta_prime: float | None = None) -> SspConfig:
    """Weights from hitting times and ``beta' = 0.5 / max secant magnitude`` of the slow map."""
    ws = ssp_weights(mdp, i0)
    if beta_prime is None:
        sol = avgcost_oracle(mdp, i0)
        slopes = np.abs(h_secants(mdp, i0, rho_grid(mdp, sol.rho_star), ws))
        beta_prime = 0.5 / float(slopes.max())
    return SspConfig(i0, float(beta_prime), np.array(ws.weights))


def _rows(R: int) -> np.ndarray:
    return np.arange(R)


def make_ssp_problem(mdp: MdpModel, cfg: SspConfig) -> TtsProblem:
    """x-iterate ``Q`` (length S*U), y-iterate ``rho`` (length 1).

    ``f`` replaces coordinate ``Z`` of ``Q`` by
    ``k(Z) - rho + sum_{j != i0} p(j|Z) min_v Q(j, v)``; the martingale term
    swaps that expectation for the sampled successor ``X_{n+1}``.
    """
    S, U, i0 = mdp.n_states, mdp.n_actions, cfg.reference_state
    Pt = truncated_kernel(mdp, i0)
    cost = mdp.cost.ravel()
    bp = cfg.beta_prime

    def expected_next(Q, z):
        minq = Q.reshape(Q.shape[0], S, U).min(axis=2)
        return minq, np.einsum("rs,rs->r", Pt[z], minq)

    def f(Q, rho, z):
        _, ev = expected_next(Q, z)
        out = Q.copy()
        out[_rows(Q.shape[0]), z] = cost[z] - rho[:, 0] + ev
        return out

    def noise(Q, rho, z, z_next, rnd):
        R = Q.shape[0]
        minq, ev = expected_next(Q, z)
        x_next = z_next // U
        sample = np.where(x_next != i0, minq[_rows(R), x_next], 0.0)
        M = np.zeros_like(Q)
        M[_rows(R), z] = sample - ev
        return M

    def g_bar(Q, rho):
        return bp * Q[:, i0 * U:(i0 + 1) * U].min(axis=1, keepdims=True) + rho

    ws = ssp_weights(mdp, i0)
    lam = 1.0 - (1.0 - ws.lambda0) * mdp.pi_min
    w = np.asarray(cfg.weights, dtype=float)
    sol = avgcost_oracle(mdp, i0)
    mu = slow_contraction_estimate(mdp, i0, bp, rho_grid(mdp, sol.rho_star), ws)
    if mu >= 1.0:
        raise ValueError(f"beta_prime={bp:g} too large: slow map factor estimate {mu:.4f} >= 1")
    return TtsProblem(
        d1=S * U, d2=1, f=f, chain=mdp.chain, noise_x=noise,
        norm_x=NormSpec.weighted_max(w), norm_y=NormSpec.max_abs(),
        slow_noiseless=True, g_bar=g_bar,
        info={"kind": "ssp", "lambda": lam, "lambda0": ws.lambda0, "pi_min": mdp.pi_min,
              "beta_prime": bp, "reference_state": i0, "mu": mu, "rho_star": sol.rho_star,
              "L": max(lam + float(w.max()), bp / float(w.min()) + 1.0)},
    )


def ssp_oracle(mdp: MdpModel, cfg: SspConfig) -> FixedPointOracle:
    i0 = cfg.reference_state
    ws = ssp_weights(mdp, i0)
    sol = avgcost_oracle(mdp, i0)

    def x_of_y(ys):
        return ssp_q_of_rho(mdp, i0, np.asarray(ys, dtype=float).reshape(-1), ws)

    return FixedPointOracle(x_of_y, np.array([sol.rho_star]), np.array(sol.q_star))


def make_polyak_problem(mdp: MdpModel, gamma: float, schedule: StepSchedule | None = None) -> TtsProblem:
    """x-iterate ``Q``, y-iterate the running average ``Qbar`` with ``g_bar(Q, Qbar) = Q``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if schedule is not None and schedule.beta0 < 8:
        log.warning("beta0=%g < 8: the O(1/n) guarantee needs beta0 >= 8", schedule.beta0)
    S, U = mdp.n_states, mdp.n_actions
    P = mdp.flat_kernel
    cost = mdp.cost.ravel()

    def expected_next(Q, z):
        minq = Q.reshape(Q.shape[0], S, U).min(axis=2)
        return minq, np.einsum("rs,rs->r", P[z], minq)

    def f(Q, Qbar, z):
        _, ev = expected_next(Q, z)
        out = Q.copy()
        out[_rows(Q.shape[0]), z] = cost[z] + gamma * ev
        return out

    def noise(Q, Qbar, z, z_next, rnd):
        R = Q.shape[0]
        minq, ev = expected_next(Q, z)
        M = np.zeros_like(Q)
        M[_rows(R), z] = gamma * (minq[_rows(R), z_next // U] - ev)
        return M

    def g_bar(Q, Qbar):
        return Q.copy()

    return TtsProblem(
        d1=S * U, d2=S * U, f=f, chain=mdp.chain, noise_x=noise,
        norm_x=NormSpec.max_abs(), norm_y=NormSpec.max_abs(),
        slow_noiseless=True, g_bar=g_bar,
        info={"kind": "polyak", "gamma": gamma, "pi_min": mdp.pi_min,
              "lambda": 1.0 - mdp.pi_min * (1.0 - gamma)},
    )


def polyak_oracle(mdp: MdpModel, gamma: float) -> FixedPointOracle:
    q = np.array(discounted_oracle(mdp, gamma).q_star)
    return FixedPointOracle(lambda ys: np.tile(q, (np.atleast_2d(ys).shape[0], 1)), q.copy(), q.copy())
