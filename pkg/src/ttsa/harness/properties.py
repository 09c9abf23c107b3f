"""Registered invariant checks, run with fixed seeds by ``ttsa props``."""

from __future__ import annotations

import traceback
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import TtsaError

SCOPES = ("markov_chain", "geometry", "tts_engine", "mdp_suite", "game_suite")


@dataclass
class PropertyResult:
    scope: str
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.scope}.{self.name}" + (f": {self.detail}" if self.detail else "")


_REGISTRY: dict[str, list[tuple[str, Callable]]] = {s: [] for s in SCOPES}


def register(scope: str):
    def deco(fn):
        _REGISTRY[scope].append((fn.__name__, fn))
        return fn
    return deco


def _check(ok: bool, detail: str) -> tuple[bool, str]:
    return bool(ok), detail


# --------------------------------------------------------------------- markov_chain

@register("markov_chain")
def stationary_residuals(ctx):
    from ..markov_chain import random_chain

    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        ch = random_chain(int(rng.integers(2, 21)), rng)
        worst = max(worst, float(np.max(np.abs(ch.pi @ ch.kernel - ch.pi))), abs(ch.pi.sum() - 1.0))
    return _check(worst <= 1e-10, f"max |pi P - pi| = {worst:.3g}")


@register("markov_chain")
def poisson_residuals(ctx):
    from ..markov_chain import poisson_residual, poisson_solve, random_chain

    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(100):
        ch = random_chain(int(rng.integers(2, 21)), rng)
        h = rng.standard_normal((ch.n_states, 3))
        h -= ch.pi @ h
        sol = poisson_solve(ch, h)
        if np.any(sol.values[sol.reference_state] != 0):
            return _check(False, "V(i0) is not exactly zero")
        worst = max(worst, poisson_residual(ch, h, sol.values))
    return _check(worst <= 1e-8, f"max Poisson residual = {worst:.3g}")


@register("markov_chain")
def poisson_ordering_invariance(ctx):
    from ..markov_chain import FiniteMarkovChain, poisson_solve, random_chain

    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(20):
        ch = random_chain(int(rng.integers(2, 15)), rng)
        h = rng.standard_normal(ch.n_states)
        h -= ch.pi @ h
        perm = rng.permutation(ch.n_states)
        inv = np.argsort(perm)
        permuted = FiniteMarkovChain(ch.kernel[np.ix_(perm, perm)])
        v1 = poisson_solve(ch, h, 0).values
        v2 = poisson_solve(permuted, h[perm], int(inv[0])).values[inv]
        worst = max(worst, float(np.max(np.abs(v1 - v2))))
    return _check(worst <= 1e-8, f"max ordering difference = {worst:.3g}")


@register("markov_chain")
def decomposition_identity(ctx):
    from ..markov_chain import FiniteMarkovChain, markov_noise_decomposition_check

    ch = FiniteMarkovChain([[0.9, 0.1], [0.5, 0.5]])
    rep = markov_noise_decomposition_check(ch, np.array([1.0, -5.0]), 20000, np.random.default_rng(104))
    ok = rep.identity_residual <= 1e-10 and rep.conditional_mean_max <= 5 * max(rep.conditional_se, 1e-300)
    return _check(ok, f"identity {rep.identity_residual:.3g}, conditional mean {rep.conditional_mean_max:.3g}"
                      f" vs 5 SE {5 * rep.conditional_se:.3g}")


@register("markov_chain")
def chain_file(ctx):
    """Loads ``--chain`` (if given) and checks it like any other chain."""
    path = ctx.get("chain")
    if path is None:
        return True, "no chain file given"
    from ..markov_chain import load_chain

    ch = load_chain(path)
    return _check(np.max(np.abs(ch.pi @ ch.kernel - ch.pi)) <= 1e-10, f"{path}: {ch.n_states} states")


# ------------------------------------------------------------------------ geometry

@register("geometry")
def envelope_sandwich_and_smoothness(ctx):
    from ..geometry import MoreauEnvelope, NormSpec, sandwich_check, smoothness_check

    rng = np.random.default_rng(201)
    worst = np.inf
    for norm in (NormSpec.euclidean(), NormSpec.max_abs()):
        for d in (1, 2, 5, 10):
            for q in (0.01, 0.1, 1.0):
                env = MoreauEnvelope(norm, q, d)
                worst = min(worst, sandwich_check(env, 300, rng).worst_slack,
                            smoothness_check(env, 300, rng).worst_slack)
    w = NormSpec.weighted_max(np.array([0.5, 1.0, 2.0]))
    env = MoreauEnvelope(w, 0.1, 3)
    worst = min(worst, sandwich_check(env, 300, rng).worst_slack, smoothness_check(env, 300, rng).worst_slack)
    return _check(True, f"worst slack {worst:.3g}")


@register("geometry")
def envelope_homogeneity(ctx):
    from ..geometry import MoreauEnvelope, NormSpec, moreau_eval

    rng = np.random.default_rng(202)
    worst = 0.0
    for norm in (NormSpec.euclidean(), NormSpec.max_abs(), NormSpec.weighted_max([1.0, 3.0, 0.2, 2.0])):
        env = MoreauEnvelope(norm, 0.1, 4)
        x = rng.standard_normal((200, 4))
        t = rng.uniform(-5, 5, size=(200, 1))
        a = moreau_eval(env, x)[0]
        at = moreau_eval(env, t * x)[0]
        worst = max(worst, float(np.max(np.abs(at - t[:, 0] ** 2 * a) / np.maximum(t[:, 0] ** 2 * a, 1e-300))))
    return _check(worst <= 1e-8, f"max relative deviation {worst:.3g}")


@register("geometry")
def envelope_gradient_inequalities(ctx):
    from ..geometry import MoreauEnvelope, NormSpec, moreau_eval, moreau_grad

    rng = np.random.default_rng(203)
    worst_dual, worst_euler = np.inf, np.inf
    for norm in (NormSpec.euclidean(), NormSpec.max_abs(), NormSpec.weighted_max([1.0, 3.0, 0.2])):
        env = MoreauEnvelope(norm, 0.1, 3)
        x1 = rng.standard_normal((1000, 3))
        x2 = rng.standard_normal((1000, 3))
        a1, a2 = moreau_eval(env, x1)[0], moreau_eval(env, x2)[0]
        g1 = moreau_grad(env, x1)
        dual = np.sqrt(2 * a1) * np.sqrt(2 * a2) - np.sum(g1 * x2, axis=1)
        euler = np.sum(g1 * x1, axis=1) - 2 * a1
        worst_dual = min(worst_dual, float(dual.min()))
        worst_euler = min(worst_euler, float(euler.min()))
    ok = worst_dual >= -1e-8 and worst_euler >= -1e-8
    return _check(ok, f"duality slack {worst_dual:.3g}, <grad, x> - 2A slack {worst_euler:.3g}")


# ---------------------------------------------------------------------- tts_engine

@register("tts_engine")
def schedule_inequalities(ctx):
    from ..engine import StepSchedule

    worst = np.inf
    for a0, b0, a in ((0.5, 0.3, 2 / 3), (0.9, 0.1, 1.0), (40.0, 20.0, 1.0), (1.0, 500.0, 2 / 3)):
        worst = min(worst, min(StepSchedule(a0, b0, a).check_bounds(10**6).values()))
    return _check(worst >= -1e-15, f"worst slack {worst:.3g}")


@register("tts_engine")
def rate_fit_power_laws(ctx):
    from ..engine import fit_rate

    n = np.unique(np.rint(np.geomspace(10, 1e4, 30)))
    worst = max(abs(fit_rate(n, 3.0 * n**p, (10, 10**4)).slope - p) for p in (-1.0, -2 / 3, -0.5))
    return _check(worst <= 1e-9, f"max exponent error {worst:.3g}")


@register("tts_engine")
def slow_noiseless_matches_general(ctx):
    from ..engine import StepSchedule, tts_run
    from ..mdp import make_polyak_problem, random_mdp

    mdp = random_mdp(3, 2, np.random.default_rng(301))
    prob = make_polyak_problem(mdp, 0.8)
    sch = StepSchedule(0.5, 0.5, 2 / 3)
    r1 = tts_run(prob, sch, np.zeros(6), np.zeros(6), 0, 2000, [10, 100, 2000], seed=5)
    r2 = tts_run(prob.as_general(), sch, np.zeros(6), np.zeros(6), 0, 2000, [10, 100, 2000], seed=5)
    same = np.array_equal(r1.x, r2.x) and np.array_equal(r1.y, r2.y)
    return _check(same, "trajectories identical" if same else "trajectories differ")


@register("tts_engine")
def replication_determinism(ctx):
    from ..engine import StepSchedule, run_replications
    from .experiment import generic_problem

    prob, orc = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0)
    sch = StepSchedule(0.5, 0.5, 2 / 3)
    args = (prob, sch, (np.zeros(1), np.zeros(1)), 3000, [100, 1000, 3000], 6, 7, orc)
    a = run_replications(*args)
    b = run_replications(*args, reps=[5, 3, 1, 0, 2, 4], batch_size=2)
    same = all(np.array_equal(a.mean(k), b.mean(k)) for k in ("err_x_sq", "err_y_sq"))
    return _check(same, "means identical under reordering" if same else "means differ")


# ----------------------------------------------------------------------- mdp_suite

@register("mdp_suite")
def avgcost_against_lp(ctx):
    from ..mdp import avgcost_oracle, lp_average_cost, random_mdp, ssp_bellman_residual

    rng = np.random.default_rng(401)
    worst_gap, worst_res = 0.0, 0.0
    for _ in range(5):
        mdp = random_mdp(int(rng.integers(2, 6)), int(rng.integers(1, 4)), rng)
        sol = avgcost_oracle(mdp, 0)
        worst_gap = max(worst_gap, abs(sol.rho_star - lp_average_cost(mdp)))
        worst_res = max(worst_res, ssp_bellman_residual(mdp, sol))
    return _check(worst_gap <= 1e-6 and worst_res <= 1e-8,
                  f"LP gap {worst_gap:.3g}, Bellman residual {worst_res:.3g}")


@register("mdp_suite")
def discounted_residual(ctx):
    from ..mdp import discounted_bellman, discounted_oracle, random_mdp

    mdp = random_mdp(5, 3, np.random.default_rng(402))
    sol = discounted_oracle(mdp, 0.9)
    res = float(np.max(np.abs(discounted_bellman(mdp, 0.9, sol.q_star) - sol.q_star)))
    return _check(res <= 1e-10, f"residual {res:.3g}")


@register("mdp_suite")
def learner_contractions(ctx):
    from ..engine import verify_contraction
    from ..mdp import default_ssp_config, make_polyak_problem, make_ssp_problem, random_mdp

    mdp = random_mdp(3, 2, np.random.default_rng(403))
    ssp = make_ssp_problem(mdp, default_ssp_config(mdp, 0))
    pol = make_polyak_problem(mdp, 0.8)
    rng = np.random.default_rng(404)
    rho = np.full((1000, 1), 0.3)
    est_ssp = verify_contraction(lambda q: ssp.f_bar(q, rho[:q.shape[0]]), ssp.norm_x, 1000, rng,
                                 dim=6, batched=True)
    est_pol = verify_contraction(lambda q: pol.f_bar(q, q), pol.norm_x, 1000, rng, dim=6, batched=True)
    ok = est_ssp <= ssp.info["lambda"] + 1e-9 and est_pol <= pol.info["lambda"] + 1e-9
    return _check(ok, f"SSP {est_ssp:.6f} <= {ssp.info['lambda']:.6f}, "
                      f"Polyak {est_pol:.6f} <= {pol.info['lambda']:.6f}")


@register("mdp_suite")
def h_map_concave(ctx):
    from ..mdp import avgcost_oracle, h_map, h_secants, random_mdp, rho_grid

    mdp = random_mdp(4, 2, np.random.default_rng(405))
    grid = rho_grid(mdp, avgcost_oracle(mdp, 0).rho_star)
    h = h_map(mdp, 0, grid)
    s = h_secants(mdp, 0, grid)
    ok = np.all(np.diff(h) <= 1e-12) and np.all(np.diff(s) <= 1e-6) and np.all(s < 0)
    return _check(ok, f"secant slopes in [{s.min():.4f}, {s.max():.4f}]")


@register("mdp_suite")
def mdp_file(ctx):
    path = ctx.get("mdp")
    if path is None:
        return True, "no MDP file given"
    from ..mdp import load_mdp

    mdp, i0 = load_mdp(path)
    return True, f"{path}: {mdp.n_states} states, {mdp.n_actions} actions, i0={i0}"


# ---------------------------------------------------------------------- game_suite

@register("game_suite")
def kkt_residuals_random(ctx):
    from ..games import kkt_oracle, kkt_residuals, random_game

    rng = np.random.default_rng(501)
    worst = 0.0
    for _ in range(50):
        game = random_game(3, 2, 2, rng)
        worst = max(worst, *kkt_residuals(game, kkt_oracle(game)))
    return _check(worst <= 1e-10, f"max KKT residual {worst:.3g}")


@register("game_suite")
def game_contractions(ctx):
    from ..engine import verify_contraction
    from ..games import make_gne_problem, random_game, x_star_of_y

    game = random_game(3, 2, 2, np.random.default_rng(502))
    prob = make_gne_problem(game, noise_scale=0.0)
    rng = np.random.default_rng(503)
    y = np.zeros((1000, 2))
    lam = verify_contraction(lambda x: prob.f(x, y[:x.shape[0]], None), prob.norm_x, 1000, rng,
                             dim=6, batched=True)
    mu = verify_contraction(lambda ys: prob.g(x_star_of_y(game, ys), ys, None), prob.norm_y, 1000, rng,
                            dim=2, batched=True)
    ok = lam <= prob.info["lambda"] + 1e-9 and mu <= prob.info["mu"] + 1e-9
    return _check(ok, f"f: {lam:.6f} <= {prob.info['lambda']:.6f}, g: {mu:.9f} <= {prob.info['mu']:.9f}")


@register("game_suite")
def playerwise_matches_stacked(ctx):
    from ..games import playerwise_step, random_game, stacked_step

    rng = np.random.default_rng(504)
    game = random_game(4, 3, 2, rng)
    x, y = rng.standard_normal((50, 12)), rng.standard_normal((50, 2))
    nx, ny = rng.standard_normal((50, 12)), rng.standard_normal((50, 2))
    a = playerwise_step(game, x, y, 0.1, 0.01, nx, ny)
    b = stacked_step(game, x, y, 0.1, 0.01, nx, ny)
    same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    return _check(same, "bitwise identical" if same else "player-wise and stacked steps differ")


@register("game_suite")
def strong_monotonicity(ctx):
    from ..games import random_game

    rng = np.random.default_rng(505)
    game = random_game(3, 2, 2, rng)
    x1, x2 = rng.standard_normal((1000, 6)), rng.standard_normal((1000, 6))
    d = x2 - x1
    lhs = np.sum(d * (game.F(x2) - game.F(x1)), axis=1)
    slack = -game.lambda0 * np.sum(d * d, axis=1) - lhs
    return _check(slack.min() >= -1e-10, f"worst slack {slack.min():.3g}")


def run_property_suite(scope: str = "all", chain: str | None = None, mdp: str | None = None,
                       echo: Callable[[str], None] | None = None) -> list[PropertyResult]:
    """Run every registered check in ``scope`` (a module name or ``all``)."""
    if scope != "all" and scope not in _REGISTRY:
        raise ValueError(f"unknown scope {scope!r}; choose from all, {', '.join(SCOPES)}")
    ctx = {"chain": chain, "mdp": mdp}
    results = []
    for sc in (SCOPES if scope == "all" else (scope,)):
        for name, fn in _REGISTRY[sc]:
            try:
                ok, detail = fn(ctx)
            except (TtsaError, AssertionError, ValueError, ArithmeticError, OSError) as exc:
                witness = getattr(exc, "witness", None)
                ok = False
                detail = f"{type(exc).__name__}: {exc}" + (f" (witness {witness!r})" if witness is not None else "")
            except Exception as exc:  # keep the suite running; report the traceback tail
                ok = False
                detail = f"{type(exc).__name__}: {exc} | {traceback.format_exc(limit=1).splitlines()[-1]}"
            res = PropertyResult(sc, name, ok, detail)
            results.append(res)
            if echo is not None:
                echo(res.line())
    return results
