"""Finite irreducible Markov chains.

Stationary distributions, trajectory sampling and exact solutions of the
Poisson equation ``V = h + P V`` pinned at a reference state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidKernel,
    NonCenteredInput,
    ReducibleChain,
    SingularSystem,
)

ROW_SUM_TOL = 1e-12
CENTERING_TOL = 1e-8
RESIDUAL_TOL = 1e-8


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            stack.append(int(j))
    return seen


def is_strongly_connected(adj: np.ndarray) -> bool:
    """Forward and backward traversal from node 0 over a boolean adjacency."""
    adj = np.asarray(adj, dtype=bool)
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


class FiniteMarkovChain:
    """Row-stochastic, irreducible transition kernel on ``n_states`` states.

    The kernel is copied and frozen on construction; instances are safe to
    share between threads.
    """

    def __init__(self, kernel):
        P = np.array(kernel, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise DimensionMismatch(f"kernel must be square, got shape {P.shape}")
        if not np.all(np.isfinite(P)) or P.min() < 0.0 or P.max() > 1.0:
            raise InvalidKernel("kernel entries must lie in [0, 1]")
        rows = P.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise InvalidKernel(
                f"row {int(bad[0])} sums to {rows[bad[0]]!r}, not 1"
            )
        if not is_strongly_connected(P > 0.0):
            raise ReducibleChain("transition graph is not strongly connected")
        P.setflags(write=False)
        self._P = P
        cum = np.cumsum(P, axis=1)
        cum[:, -1] = 1.0
        cum.setflags(write=False)
        self._cum = cum

    @property
    def kernel(self) -> np.ndarray:
        return self._P

    @property
    def cumulative(self) -> np.ndarray:
        """Row-wise CDF used for inverse-transform sampling."""
        return self._cum

    @property
    def n_states(self) -> int:
        return self._P.shape[0]

    @cached_property
    def pi(self) -> np.ndarray:
        return stationary_distribution(self)

    def __repr__(self) -> str:
        return f"FiniteMarkovChain(n_states={self.n_states})"


@dataclass(frozen=True)
class PoissonSolution:
    values: np.ndarray  # (n_states, d)
    reference_state: int


def stationary_distribution(chain: FiniteMarkovChain) -> np.ndarray:
    """Solve ``pi P = pi, sum(pi) = 1`` as one overdetermined linear system."""
    P = chain.kernel
    n = P.shape[0]
    lhs = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, _, rank, _ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if rank < n or not np.all(np.isfinite(pi)):
        raise SingularSystem(f"stationary system has rank {rank} < {n}")
    pi = np.where(pi < 0.0, 0.0, pi)
    pi = pi / pi.sum()
    if np.max(np.abs(pi @ P - pi)) > 1e-10:
        raise SingularSystem("stationary solve left a residual above 1e-10")
    return pi


def sample_step(chain: FiniteMarkovChain, state: int, rng: np.random.Generator) -> int:
    """Draw the successor of ``state`` from one uniform variate of ``rng``."""
    if not 0 <= state < chain.n_states:
        raise IndexError(f"state {state} out of range")
    return next_states(chain, np.array([state]), np.array([rng.random()]))[0]


def next_states(chain: FiniteMarkovChain, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorised inverse-transform step: successor of each state given uniforms."""
    cum = chain.cumulative[states]
    return np.minimum((u[:, None] >= cum).sum(axis=1), chain.n_states - 1)


def sample_path(
    chain: FiniteMarkovChain, n_steps: int, z0: int, rng: np.random.Generator
) -> np.ndarray:
    """Trajectory ``Z_0..Z_n`` (length ``n_steps + 1``) started at ``z0``."""
    u = rng.random(n_steps)
    path = np.empty(n_steps + 1, dtype=np.intp)
    path[0] = z0
    cum = chain.cumulative
    last = chain.n_states - 1
    for m in range(n_steps):
        path[m + 1] = min(int(np.searchsorted(cum[path[m]], u[m], side="right")), last)
    return path


def _as_matrix(h, n: int) -> tuple[np.ndarray, bool]:
    h = np.asarray(h, dtype=float)
    was_vector = h.ndim == 1
    if was_vector:
        h = h[:, None]
    if h.ndim != 2 or h.shape[0] != n:
        raise DimensionMismatch(f"h must have {n} rows, got shape {h.shape}")
    return h, was_vector


def poisson_solve(chain: FiniteMarkovChain, h, reference_state: int = 0) -> PoissonSolution:
    """Solution of ``V(i) = h(i) + sum_j p(j|i) V(j)`` with ``V(i0) = 0``.

    ``h`` (shape ``(n,)`` or ``(n, d)``) must have zero stationary mean in each
    column. The equation of row ``i0`` is replaced by the pinning constraint,
    which is redundant otherwise because ``pi (I - P) = 0``.
    """
    n = chain.n_states
    if not 0 <= reference_state < n:
        raise IndexError(f"reference_state {reference_state} out of range")
    h, _ = _as_matrix(h, n)
    mean = chain.pi @ h
    if np.max(np.abs(mean), initial=0.0) > CENTERING_TOL:
        raise NonCenteredInput(f"stationary mean of h is {mean}, expected 0")
    lhs = np.eye(n) - chain.kernel
    lhs[reference_state] = 0.0
    lhs[reference_state, reference_state] = 1.0
    rhs = h.copy()
    rhs[reference_state] = 0.0
    try:
        V = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    V[reference_state] = 0.0
    if not np.all(np.isfinite(V)):
        raise SingularSystem("Poisson solve produced non-finite values")
    if poisson_residual(chain, h, V) > RESIDUAL_TOL:
        raise SingularSystem("Poisson solve residual above tolerance")
    V.setflags(write=False)
    return PoissonSolution(values=V, reference_state=reference_state)


def poisson_residual(chain: FiniteMarkovChain, h, V) -> float:
    """``max |V - h - P V|`` over states and components."""
    h, _ = _as_matrix(h, chain.n_states)
    V, _ = _as_matrix(V, chain.n_states)
    return float(np.max(np.abs(V - h - chain.kernel @ V), initial=0.0))


@dataclass(frozen=True)
class DecompositionReport:
    n_steps: int
    identity_residual: float  # max_m |h(Z_m) - (Vt_{m+1} + V(Z_m) - V(Z_{m+1}))|
    conditional_mean_max: float  # max_i |mean(Vt_{m+1} | Z_m = i)|
    conditional_se: float  # standard error at the state attaining the max
    per_state_mean: np.ndarray
    per_state_se: np.ndarray

    def rows(self):
        yield ("identity_residual", self.identity_residual)
        yield ("conditional_mean_max", self.conditional_mean_max)
        yield ("conditional_se", self.conditional_se)


def markov_noise_decomposition_check(
    chain: FiniteMarkovChain,
    h,
    n_steps: int,
    rng: np.random.Generator,
    reference_state: int = 0,
    z0: int | None = None,
) -> DecompositionReport:
    """Split ``h(Z_m)`` into a martingale difference plus a telescoping term.

    With ``V`` the pinned Poisson solution, ``Vt_{m+1} = V(Z_{m+1}) - (P V)(Z_m)``
    must have zero conditional mean given ``Z_m``; ``h(Z_m) = Vt_{m+1} + V(Z_m)
    - V(Z_{m+1})`` holds exactly.
    """
    h_mat, _ = _as_matrix(h, chain.n_states)
    V = poisson_solve(chain, h_mat, reference_state).values
    PV = chain.kernel @ V
    start = reference_state if z0 is None else z0
    path = sample_path(chain, n_steps, start, rng)
    cur, nxt = path[:-1], path[1:]
    vt = V[nxt] - PV[cur]
    rebuilt = vt + V[cur] - V[nxt]
    identity = float(np.max(np.abs(h_mat[cur] - rebuilt), initial=0.0))

    n, d = chain.n_states, h_mat.shape[1]
    means = np.zeros((n, d))
    ses = np.zeros((n, d))
    for i in range(n):
        sel = vt[cur == i]
        if sel.shape[0] >= 2:
            means[i] = sel.mean(axis=0)
            ses[i] = sel.std(axis=0, ddof=1) / np.sqrt(sel.shape[0])
    k = np.unravel_index(np.argmax(np.abs(means)), means.shape)
    return DecompositionReport(
        n_steps=n_steps,
        identity_residual=identity,
        conditional_mean_max=float(np.abs(means[k])),
        conditional_se=float(ses[k]),
        per_state_mean=means,
        per_state_se=ses,
    )


def random_chain(n_states: int, rng: np.random.Generator, density: float = 0.5) -> FiniteMarkovChain:
    """Random irreducible chain: a cycle through all states plus random extra edges."""
    mask = rng.random((n_states, n_states)) < density
    perm = rng.permutation(n_states)
    mask[perm, np.roll(perm, -1)] = True
    weights = rng.random((n_states, n_states)) * mask
    weights[perm, np.roll(perm, -1)] += 0.05
    P = weights / weights.sum(axis=1, keepdims=True)
    # exact unit row sums: absorb rounding into the largest entry
    idx = np.argmax(P, axis=1)
    P[np.arange(n_states), idx] += 1.0 - P.sum(axis=1)
    return FiniteMarkovChain(P)


def load_chain(path) -> FiniteMarkovChain:
    """Read a chain: first line ``n_states``, then that many whitespace rows."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise DimensionMismatch(f"{path}: empty chain file")
    n = int(lines[0])
    rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise DimensionMismatch(f"{path}: expected {n} rows of {n} entries")
    return FiniteMarkovChain(np.array(rows))


def save_chain(chain: FiniteMarkovChain, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{chain.n_states}\n")
        for row in chain.kernel:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_report_csv(report: DecompositionReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        for name, value in report.rows():
            w.writerow([name, f"{value:.17g}"])
