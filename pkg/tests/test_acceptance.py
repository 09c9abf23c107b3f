"""Acceptance criteria AC-1 to AC-10.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts the criterion. The three long simulations use the shipped configs in
``configs/``; their gains are discussed in the decisions ledger.
"""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest

from conftest import record
from ttsa.engine.verify import verify_contraction, verify_xstar_lipschitz
from ttsa.errors import PropertyViolated
from ttsa.games import gne_constants, kkt_oracle, kkt_residuals, make_gne_problem, random_game, x_star_of_y
from ttsa.geometry import MoreauEnvelope, NormSpec, sandwich_check, smoothness_check
from ttsa.harness.config import load_config
from ttsa.harness.experiment import build_problem, run_experiment
from ttsa.markov_chain import markov_noise_decomposition_check, poisson_residual, poisson_solve, random_chain
from ttsa.mdp import (
    avgcost_oracle,
    default_ssp_config,
    discounted_bellman,
    discounted_oracle,
    lp_average_cost,
    make_polyak_problem,
    make_ssp_problem,
    random_mdp,
    rho_grid,
    ssp_oracle,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SLOPE_1N = (-1.35, -0.65)
SLOPE_23 = (-0.95, -0.45)


def acceptance_mdp():
    # same generator call the ssp and polyak configs make
    return random_mdp(3, 2, np.random.default_rng(207), branching=2)


def in_band(slope, band):
    return band[0] <= slope <= band[1]


@pytest.fixture(scope="module")
def ssp_runs(tmp_path_factory):
    cfg = load_config(CONFIGS / "ssp.ini")
    out = tmp_path_factory.mktemp("ssp")
    first = run_experiment(cfg, out / "run1")
    second = run_experiment(cfg, out / "run2")
    return cfg, first, second


def test_ac1_ssp_q_learning_rate(ssp_runs):
    cfg, rep, _ = ssp_runs
    fq, fr = rep.fits["err_x_sq"], rep.fits["err_y_sq"]
    ok = (cfg.beta0 / cfg.alpha0 <= 0.5 and cfg.exponent_a == 1.0 and cfg.n_reps == 100
          and cfg.horizon == 200_000 and in_band(fq.slope, SLOPE_1N) and in_band(fr.slope, SLOPE_1N))
    record("AC-1", ok, f"slope ||Q-Q*||_w^2 {fq.slope:+.3f} (r2 {fq.r_squared:.3f}), "
                       f"slope |rho-rho*|^2 {fr.slope:+.3f} (r2 {fr.r_squared:.3f}), "
                       f"window {fq.window}, {rep.wall_seconds:.0f}s")
    assert ok


def test_ac2_polyak_averaging_rate(tmp_path):
    cfg = load_config(CONFIGS / "polyak.ini")
    rep = run_experiment(cfg, tmp_path)
    fbar = rep.fits["err_y_sq"]
    q_final = rep.summary.mean("err_x_sq")[-1]
    qbar_final = rep.summary.mean("err_y_sq")[-1]
    ok = (cfg.beta0 == 8 and cfg.params["gamma"] == 0.8 and cfg.n_reps == 100 and cfg.horizon == 200_000
          and in_band(fbar.slope, SLOPE_1N) and qbar_final <= q_final)
    record("AC-2", ok, f"slope ||Qbar-Q*||_inf^2 {fbar.slope:+.3f} (r2 {fbar.r_squared:.3f}); final "
                       f"Qbar {qbar_final:.3e} vs Q {q_final:.3e}, {rep.wall_seconds:.0f}s")
    assert ok


def test_ac3_gne_learning_rate(tmp_path):
    cfg = load_config(CONFIGS / "gne.ini")
    rep = run_experiment(cfg, tmp_path)
    fit = rep.fits["gne_error"]
    ok = (cfg.params["noise_scale"] == 1.0 and abs(cfg.exponent_a - 2 / 3) < 1e-12 and cfg.n_reps == 200
          and cfg.horizon == 10**6 and in_band(fit.slope, SLOPE_23))
    record("AC-3", ok, f"slope ||Ax-b||^2+||x-x*||^2 {fit.slope:+.3f} (r2 {fit.r_squared:.3f}), "
                       f"{rep.wall_seconds:.0f}s")
    assert ok


def test_ac4_envelope_properties():
    rng = np.random.default_rng(4)
    worst_sandwich = worst_smooth = np.inf
    failures = []
    for norm, dim, q in itertools.product((NormSpec.euclidean(), NormSpec.max_abs()), (1, 2, 5, 10),
                                          (0.01, 0.1, 1.0)):
        env = MoreauEnvelope(norm, q, dim)
        try:
            worst_sandwich = min(worst_sandwich, sandwich_check(env, 1000, rng).worst_slack)
            worst_smooth = min(worst_smooth, smoothness_check(env, 1000, rng).worst_slack)
        except PropertyViolated as exc:
            failures.append(f"{norm.kind} d={dim} q={q}: {exc}")
    ok = not failures
    record("AC-4", ok, f"24 envelopes x 1000 samples, worst slack sandwich {worst_sandwich:.2e}, "
                       f"smoothness {worst_smooth:.2e}" + (f"; {failures[0]}" if failures else ""))
    assert ok


def test_ac5_poisson_and_decomposition():
    rng = np.random.default_rng(5)
    worst_res = worst_id = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 21))
        ch = random_chain(n, rng)
        h = rng.standard_normal((n, 2))
        h -= ch.pi @ h
        sol = poisson_solve(ch, h, int(rng.integers(n)))
        worst_res = max(worst_res, poisson_residual(ch, h, sol.values))
        rep = markov_noise_decomposition_check(ch, h, 2000, rng)
        worst_id = max(worst_id, rep.identity_residual)
    ok = worst_res <= 1e-8 and worst_id <= 1e-10
    record("AC-5", ok, f"100 chains, max Poisson residual {worst_res:.2e}, max identity residual {worst_id:.2e}")
    assert ok


def test_ac6_fast_fixed_point_lipschitz():
    mdp = acceptance_mdp()
    cfg = default_ssp_config(mdp)
    prob, oracle = make_ssp_problem(mdp, cfg), ssp_oracle(mdp, cfg)
    grid = rho_grid(mdp, prob.info["rho_star"])
    pairs = [(np.array([a]), np.array([b])) for a, b in itertools.combinations(grid, 2)]
    details, ok = [], True
    try:
        rep = verify_xstar_lipschitz(prob, pairs, prob.info["L"], prob.info["lambda"], oracle.x_star_of_y)
        details.append(f"SSP max ratio {rep.max_ratio:.3f} <= {rep.bound:.3f}")
    except PropertyViolated as exc:
        ok = False
        details.append(f"SSP {exc}")

    game = random_game(3, 2, 2, np.random.default_rng(6))
    gprob = make_gne_problem(game)
    rng = np.random.default_rng(60)
    ypairs = [(rng.standard_normal(2) * 3, rng.standard_normal(2) * 3) for _ in range(50)]
    try:
        rep = verify_xstar_lipschitz(gprob, ypairs, gprob.info["L"], gprob.info["lambda"],
                                     lambda ys: x_star_of_y(game, ys))
        details.append(f"game max ratio {rep.max_ratio:.3f} <= {rep.bound:.1f}")
    except PropertyViolated as exc:
        ok = False
        details.append(f"game {exc}")
    record("AC-6", ok, "; ".join(details))
    assert ok


def test_ac7_learner_contractions():
    mdp = acceptance_mdp()
    prob = make_ssp_problem(mdp, default_ssp_config(mdp))
    rho = np.array([[prob.info["rho_star"]]])
    ssp_bound = 1 - (1 - prob.info["lambda0"]) * prob.info["pi_min"]
    ssp_est = verify_contraction(lambda Q: prob.f_bar(Q, np.repeat(rho, Q.shape[0], 0)), prob.norm_x, 1000,
                                 np.random.default_rng(7), dim=prob.d1, batched=True)
    gamma = 0.8
    pol = make_polyak_problem(mdp, gamma)
    pol_bound = 1 - mdp.pi_min * (1 - gamma)
    pol_est = verify_contraction(lambda Q: pol.f_bar(Q, Q), NormSpec.max_abs(), 1000,
                                 np.random.default_rng(70), dim=pol.d1, batched=True)
    ok = ssp_est <= ssp_bound + 1e-9 and pol_est <= pol_bound + 1e-9
    record("AC-7", ok, f"SSP {ssp_est:.6f} <= {ssp_bound:.6f}; Polyak {pol_est:.6f} <= {pol_bound:.6f}")
    assert ok


def test_ac8_game_contractions_and_kkt():
    rng = np.random.default_rng(8)
    worst_kkt = 0.0
    worst_lam_slack = worst_mu_slack = np.inf
    for _ in range(50):
        game = random_game(3, 2, 2, rng)
        prob = make_gne_problem(game)
        k = gne_constants(game)
        worst_kkt = max(worst_kkt, *kkt_residuals(game, kkt_oracle(game)))
        y = rng.standard_normal((1, 2))
        lam = verify_contraction(lambda X: prob.f(X, np.repeat(y, X.shape[0], 0), None), NormSpec.euclidean(),
                                 200, rng, dim=game.dim, batched=True)
        mu = verify_contraction(lambda Y: prob.g(x_star_of_y(game, Y), Y, None), NormSpec.euclidean(),
                                200, rng, dim=2, batched=True)
        worst_lam_slack = min(worst_lam_slack, np.sqrt(1 - game.lambda0**2 / game.ell**2) - lam)
        worst_mu_slack = min(worst_mu_slack, np.sqrt(1 - k.mu0**2 / k.ell0**2) - mu)
    ok = worst_kkt <= 1e-10 and worst_lam_slack >= -1e-9 and worst_mu_slack >= -1e-9
    record("AC-8", ok, f"50 games, max KKT residual {worst_kkt:.2e}, min slack fast {worst_lam_slack:.2e}, "
                       f"slow {worst_mu_slack:.2e}")
    assert ok


def test_ac9_oracle_cross_validation():
    rng = np.random.default_rng(9)
    worst_gap = worst_bellman = 0.0
    for _ in range(25):
        S, U = int(rng.integers(2, 8)), int(rng.integers(1, 4))
        mdp = random_mdp(S, U, rng, branching=int(rng.integers(1, S + 1)))
        worst_gap = max(worst_gap, abs(avgcost_oracle(mdp, int(rng.integers(S))).rho_star - lp_average_cost(mdp)))
        q = np.array(discounted_oracle(mdp, 0.9).q_star)
        worst_bellman = max(worst_bellman, float(np.max(np.abs(discounted_bellman(mdp, 0.9, q) - q))))
    ok = worst_gap <= 1e-6 and worst_bellman <= 1e-10
    record("AC-9", ok, f"25 MDPs, max |rho* - LP| {worst_gap:.2e}, max discounted residual {worst_bellman:.2e}")
    assert ok


def test_ac10_summary_csv_byte_identical(ssp_runs):
    _, first, second = ssp_runs
    a = first.files["summary"].read_bytes()
    b = second.files["summary"].read_bytes()
    ok = a == b and len(a) > 0
    record("AC-10", ok, f"two runs of the AC-1 config, summary.csv {len(a)} bytes, identical={a == b}")
    assert ok


def test_acceptance_configs_build_the_documented_problems():
    cfg = load_config(CONFIGS / "ssp.ini")
    problem, oracle, x0, _ = build_problem(cfg)
    assert oracle.y_star[0] == pytest.approx(avgcost_oracle(acceptance_mdp()).rho_star, abs=1e-12)
    np.testing.assert_array_equal(x0, 0.0)
