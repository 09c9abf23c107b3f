"""Norms and the generalized Moreau envelope of a squared norm.

``A(x) = min_v 0.5 * ||v||^2 + (1 / 2q) * ||x - v||_2^2``

For the max-type norms the inner problem reduces to a scalar one: at the
optimum ``v`` is ``x`` clipped coordinatewise to ``|v_j| <= t / w_j``, where
``t = ||v||_w`` solves a piecewise-linear monotone equation that is solved
exactly after sorting the breakpoints ``w_j |x_j|``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, PropertyViolated, SolverDiverged

KINDS = ("euclidean", "max_abs", "weighted_max")


@dataclass(frozen=True)
class NormSpec:
    kind: str
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "weighted_max":
            if self.weights is None:
                raise ValueError("weighted_max needs weights")
            w = np.array(self.weights, dtype=float).ravel()
            if w.size == 0 or not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be strictly positive")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError(f"{self.kind} takes no weights")

    @classmethod
    def euclidean(cls) -> NormSpec:
        return cls("euclidean")

    @classmethod
    def max_abs(cls) -> NormSpec:
        return cls("max_abs")

    @classmethod
    def weighted_max(cls, weights) -> NormSpec:
        return cls("weighted_max", np.asarray(weights, dtype=float))

    def __call__(self, x) -> np.ndarray | float:
        return norm_eval(self, x)

    def scale(self, dim: int) -> np.ndarray:
        """Per-coordinate weights (ones for the unweighted max norm)."""
        if self.kind == "weighted_max":
            if self.weights.size != dim:
                raise DimensionMismatch(f"norm has {self.weights.size} weights, vector has {dim}")
            return self.weights
        return np.ones(dim)

    def equivalence(self, dim: int) -> tuple[float, float]:
        """Constants ``(ell, u)`` with ``ell*||x|| <= ||x||_2 <= u*||x||``."""
        if self.kind == "euclidean":
            return 1.0, 1.0
        w = self.scale(dim)
        return 1.0 / float(w.max()), float(np.sqrt(dim)) / float(w.min())

    def __eq__(self, other):
        if not isinstance(other, NormSpec) or other.kind != self.kind:
            return False
        if self.weights is None:
            return other.weights is None
        return other.weights is not None and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.kind, None if self.weights is None else self.weights.tobytes()))


def norm_eval(spec: NormSpec, x):
    """Norm along the last axis; scalar for 1-D input."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if spec.kind == "euclidean":
        out = np.sqrt(np.sum(x * x, axis=-1))
    else:
        out = np.max(np.abs(x) * spec.scale(x.shape[-1]), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _max_radius(absx: np.ndarray, w: np.ndarray, q: float) -> np.ndarray:
    """Optimal ``t = ||v||_w`` for each row of ``absx`` (shape (m, d)).

    Stationarity: ``q t = sum_{j: w_j|x_j| > t} (|x_j| - t/w_j) / w_j``.
    With the top-k breakpoints active the root is
    ``t_k = sum_k |x_j|/w_j / (q + sum_k 1/w_j^2)``; the optimum is the first
    ``k`` whose root is not below the next breakpoint.
    """
    b = absx * w
    order = np.argsort(-b, axis=1)
    b_sorted = np.take_along_axis(b, order, axis=1)
    num = np.cumsum(np.take_along_axis(absx / w, order, axis=1), axis=1)
    den = q + np.cumsum(np.take_along_axis(np.broadcast_to(1.0 / w**2, absx.shape), order, axis=1), axis=1)
    t_k = num / den
    nxt = np.concatenate([b_sorted[:, 1:], np.zeros((b.shape[0], 1))], axis=1)
    ok = t_k >= nxt * (1.0 - 1e-15)
    k = np.argmax(ok, axis=1)
    return t_k[np.arange(b.shape[0]), k]


@dataclass(frozen=True)
class MoreauEnvelope:
    base_norm: NormSpec
    q: float
    dim: int
    ell: float = field(init=False)
    u: float = field(init=False)

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("q must be positive")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        ell, u = self.base_norm.equivalence(self.dim)
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "u", u)

    def __call__(self, x):
        return moreau_eval(self, x)[0]

    def norm(self, x):
        """The norm ``||x||_A = sqrt(2 A(x))`` induced by the envelope."""
        return np.sqrt(2.0 * np.asarray(moreau_eval(self, x)[0]))


def default_q(ell: float, contraction: float | None = None) -> float:
    if contraction is None:
        return 0.01
    return 0.1 * min(ell**2, (1.0 - contraction) / (2.0 * contraction + 1.0))


def _check_dim(env: MoreauEnvelope, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != env.dim:
        raise DimensionMismatch(f"envelope has dim {env.dim}, vector has {x.shape[-1]}")
    return x


def moreau_eval(env: MoreauEnvelope, x):
    """Envelope value and the inner minimizer; batched over leading axes."""
    x = _check_dim(env, x)
    q = env.q
    if env.base_norm.kind == "euclidean":
        v = x / (1.0 + q)
        value = 0.5 * np.sum(v * v, axis=-1) + np.sum((x - v) ** 2, axis=-1) / (2.0 * q)
    else:
        w = env.base_norm.scale(env.dim)
        flat = x.reshape(-1, env.dim)
        absx = np.abs(flat)
        t = _max_radius(absx, w, q)
        v = np.sign(flat) * np.minimum(absx, t[:, None] / w)
        value = 0.5 * t * t + np.sum((flat - v) ** 2, axis=-1) / (2.0 * q)
        v = v.reshape(x.shape)
        value = value.reshape(x.shape[:-1])
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(v))):
        raise SolverDiverged("envelope evaluation produced non-finite values")
    if np.ndim(value) == 0:
        value = float(value)
    return value, v


def moreau_grad(env: MoreauEnvelope, x):
    x = _check_dim(env, x)
    _, v = moreau_eval(env, x)
    return (x - v) / env.q


@dataclass
class CheckReport:
    property: str
    samples: int
    worst_slack: float
    witness: object = None

    def row(self):
        return [self.property, self.samples, f"{self.worst_slack:.17g}", _fmt_witness(self.witness)]


def _fmt_witness(w):
    if w is None:
        return ""
    if isinstance(w, tuple):
        return "|".join(_fmt_witness(a) for a in w)
    return " ".join(f"{float(v):.17g}" for v in np.ravel(w))


def write_reports_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["property", "samples", "worst_slack", "witness"])
        for r in reports:
            out.writerow(r.row())


def _sample(env: MoreauEnvelope, n: int, rng: np.random.Generator) -> np.ndarray:
    scale = np.exp(rng.uniform(-2.0, 1.0, size=(n, 1)))
    return rng.standard_normal((n, env.dim)) * scale


def sandwich_check(env: MoreauEnvelope, samples: int, rng: np.random.Generator, tol: float = 1e-9):
    """``(1+q/u^2) A(x) <= 0.5||x||^2 <= (1+q/ell^2) A(x)`` on random ``x``."""
    xs = _sample(env, samples, rng)
    A, _ = moreau_eval(env, xs)
    half_sq = 0.5 * np.asarray(env.base_norm(xs)) ** 2
    lower = half_sq - (1.0 + env.q / env.u**2) * A
    upper = (1.0 + env.q / env.ell**2) * A - half_sq
    slack = np.minimum(lower, upper)
    k = int(np.argmin(slack))
    report = CheckReport("sandwich", samples, float(slack[k]), xs[k])
    if slack[k] < -tol:
        raise PropertyViolated(f"sandwich inequality violated by {-slack[k]:.3e}", xs[k])
    return report


def smoothness_check(env: MoreauEnvelope, samples: int, rng: np.random.Generator, tol: float = 1e-8):
    """Convexity and ``1/q``-smoothness of the envelope on random pairs."""
    x1 = _sample(env, samples, rng)
    x2 = x1 + _sample(env, samples, rng)
    A1, _ = moreau_eval(env, x1)
    A2, _ = moreau_eval(env, x2)
    g1 = moreau_grad(env, x1)
    d = x2 - x1
    lin = A1 + np.sum(g1 * d, axis=-1)
    smooth = lin + np.sum(d * d, axis=-1) / (2.0 * env.q) - A2
    convex = A2 - lin
    slack = np.minimum(smooth, convex)
    k = int(np.argmin(slack))
    report = CheckReport("smoothness", samples, float(slack[k]), (x1[k], x2[k]))
    if slack[k] < -tol:
        raise PropertyViolated(f"smoothness/convexity violated by {-slack[k]:.3e}", (x1[k], x2[k]))
    return report
