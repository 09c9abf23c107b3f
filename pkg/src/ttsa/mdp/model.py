from __future__ import annotations

from functools import cached_property
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, InvalidKernel
from ..markov_chain import FiniteMarkovChain

ROW_SUM_TOL = 1e-12


class MdpModel:
    """Finite controlled Markov chain with running costs and a fixed sampling policy.

    ``kernel[i, u, j] = p(j | i, u)``, ``cost[i, u] = k(i, u)`` and
    ``sampling_policy[i, u] = Phi_s(u | i)``. State-action pairs are
    flattened as ``z = i * n_actions + u`` throughout.
    """

    def __init__(self, kernel, cost, sampling_policy=None):
        P = np.array(kernel, dtype=float)
        k = np.array(cost, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise DimensionMismatch(f"kernel must have shape (S, U, S), got {P.shape}")
        S, U = P.shape[:2]
        if k.shape != (S, U):
            raise DimensionMismatch(f"cost must have shape {(S, U)}, got {k.shape}")
        phi = np.full((S, U), 1.0 / U) if sampling_policy is None else np.array(sampling_policy, dtype=float)
        if phi.shape != (S, U):
            raise DimensionMismatch(f"sampling policy must have shape {(S, U)}")
        if P.min() < 0 or np.any(np.abs(P.sum(axis=2) - 1.0) > ROW_SUM_TOL):
            raise InvalidKernel("each p(.|i,u) must be a probability vector")
        if not np.all(phi > 0) or np.any(np.abs(phi.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise InvalidKernel("sampling policy must be strictly positive and row-stochastic")
        if not np.all(np.isfinite(k)):
            raise ValueError("costs must be finite")
        for a in (P, k, phi):
            a.setflags(write=False)
        self.kernel, self.cost, self.sampling_policy = P, k, phi
        self.chain  # irreducibility of the state-action chain, checked eagerly

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    @cached_property
    def chain(self) -> FiniteMarkovChain:
        """Chain of ``Z_n = (X_n, U_n)``: ``p(j | i, u) * Phi_s(v | j)``."""
        S, U = self.n_states, self.n_actions
        P = (self.kernel[:, :, :, None] * self.sampling_policy[None, None, :, :]).reshape(S * U, S * U)
        P = P / P.sum(axis=1, keepdims=True)
        return FiniteMarkovChain(P)

    @property
    def pi_min(self) -> float:
        return float(self.chain.pi.min())

    @property
    def flat_kernel(self) -> np.ndarray:
        """``(S*U, S)`` matrix of ``p(j | z)``."""
        return self.kernel.reshape(self.n_pairs, self.n_states)

    def __repr__(self) -> str:
        return f"MdpModel(n_states={self.n_states}, n_actions={self.n_actions})"


def random_mdp(n_states: int, n_actions: int, rng: np.random.Generator,
               branching: int | None = None) -> MdpModel:
    """Garnet-style random MDP with costs uniform on [0, 1] and a uniform sampling policy.

    Every ``p(.|i,u)`` puts mass on ``i+1 (mod S)`` plus ``branching - 1``
    other random successors, so the chain is irreducible under every policy.
    """
    S, U = n_states, n_actions
    b = S if branching is None else max(1, min(branching, S))
    P = np.zeros((S, U, S))
    for i in range(S):
        for u in range(U):
            others = [j for j in range(S) if j != (i + 1) % S]
            succ = [(i + 1) % S] + list(rng.choice(others, size=b - 1, replace=False)) if b > 1 else [(i + 1) % S]
            w = rng.uniform(0.1, 1.0, size=len(succ))
            P[i, u, succ] = w / w.sum()
            P[i, u, (i + 1) % S] += 1.0 - P[i, u].sum()
    cost = rng.uniform(0.0, 1.0, size=(S, U))
    return MdpModel(P, cost)


def _numbers(path) -> list[str]:
    tokens = []
    for line in Path(path).read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    return tokens


def load_mdp(path) -> tuple[MdpModel, int]:
    """Read an MDP file; returns the model and its reference state.

    Layout (whitespace separated): ``S U i0``, the ``S x U`` cost matrix,
    ``S*U`` transition rows of length ``S`` in ``(i, u)`` order, then the
    ``S x U`` sampling policy.
    """
    tok = _numbers(path)
    S, U, i0 = (int(t) for t in tok[:3])
    vals = np.array([float(t) for t in tok[3:]])
    need = S * U + S * U * S + S * U
    if vals.size != need:
        raise DimensionMismatch(f"{path}: expected {need} numbers after the header, found {vals.size}")
    cost = vals[:S * U].reshape(S, U)
    kernel = vals[S * U:S * U + S * U * S].reshape(S, U, S)
    phi = vals[S * U + S * U * S:].reshape(S, U)
    if not 0 <= i0 < S:
        raise DimensionMismatch(f"{path}: reference state {i0} out of range")
    return MdpModel(kernel, cost, phi), i0


def save_mdp(mdp: MdpModel, path, reference_state: int = 0) -> None:
    S, U = mdp.n_states, mdp.n_actions
    with open(path, "w") as fh:
        fh.write(f"{S} {U} {reference_state}\n")
        for row in mdp.cost:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        for row in mdp.kernel.reshape(S * U, S):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        for row in mdp.sampling_policy:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
