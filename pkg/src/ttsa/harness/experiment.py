"""Build a problem from a config, run the replications and write CSV reports."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..engine import (
    FixedPointOracle,
    RateFit,
    ReplicationSummary,
    StepSchedule,
    TtsProblem,
    fit_rate,
    last_decades,
    log_checkpoints,
    run_replications,
)
from ..errors import ConfigError, InsufficientPoints, NonPositiveValue
from ..geometry import MoreauEnvelope, default_q
from ..markov_chain import FiniteMarkovChain
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# two-state chain used to inject Markovian noise into the generic scalar problem;
# pi = (5/6, 1/6), so the shift (1, -5) has zero stationary mean
GENERIC_KERNEL = np.array([[0.9, 0.1], [0.5, 0.5]])
GENERIC_SHIFT = np.array([1.0, -5.0])


def generic_problem(fx: float, fy: float, cx: float, gx: float, gy: float, cy: float,
                    markov: float = 1.0, noise_x: float = 1.0, noise_y: float = 0.0
                    ) -> tuple[TtsProblem, FixedPointOracle]:
    """Scalar linear problem with an exact oracle.

    ``f(x, y, z) = fx x + fy y + cx + markov * s(z)`` with a centred shift
    ``s``, ``g(x, y, z) = gx x + gy y + cy``, and Gaussian noise of standard
    deviation ``noise_x`` / ``noise_y`` on the two scales.
    """
    if not abs(fx) < 1:
        raise ConfigError("must satisfy |fx| < 1 for a contraction", "fx")
    denom = 1.0 - gy - gx * fy / (1.0 - fx)
    if denom == 0:
        raise ConfigError("slow map has no unique fixed point", "gy")
    chain = FiniteMarkovChain(GENERIC_KERNEL) if markov else None
    shift = markov * GENERIC_SHIFT

    def f(x, y, z):
        out = fx * x + fy * y + cx
        return out + shift[z][:, None] if chain is not None else out

    def g(x, y, z):
        return gx * x + gy * y + cy

    nx = (lambda x, y, z, zn, rnd: noise_x * rnd.normal(1)) if noise_x else None
    ny = (lambda x, y, z, zn, rnd: noise_y * rnd.normal(1)) if noise_y else None
    y_star = (gx * cx / (1.0 - fx) + cy) / denom
    oracle = FixedPointOracle(
        lambda ys: (fy * np.asarray(ys, dtype=float) + cx) / (1.0 - fx),
        np.array([y_star]), np.array([(fy * y_star + cx) / (1.0 - fx)]),
    )
    lam = abs(fx)
    problem = TtsProblem(d1=1, d2=1, f=f, g=g, chain=chain, noise_x=nx, noise_y=ny,
                         info={"kind": "generic", "lambda": lam, "mu": abs(gy + gx * fy / (1 - fx)),
                               "L": max(abs(fx), abs(fy), abs(gx), abs(gy)) + 1.0})
    return problem, oracle


def build_problem(cfg: ExperimentConfig) -> tuple[TtsProblem, FixedPointOracle, np.ndarray, np.ndarray]:
    """Problem, oracle and initial point for a config."""
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    if cfg.kind == "generic":
        problem, oracle = generic_problem(**p)
    elif cfg.kind in ("ssp", "polyak"):
        from ..mdp import (default_ssp_config, load_mdp, make_polyak_problem, make_ssp_problem,
                           polyak_oracle, random_mdp, ssp_oracle)

        i0 = 0
        if cfg.model:
            mdp, i0 = load_mdp(cfg.model)
        else:
            mdp = random_mdp(p["states"], p["actions"], rng, p["branching"])
        if p.get("reference_state") is not None:
            i0 = p["reference_state"]
        if cfg.kind == "ssp":
            if not 0 <= i0 < mdp.n_states:
                raise ConfigError(f"out of range for {mdp.n_states} states", "reference_state")
            scfg = default_ssp_config(mdp, i0, p["beta_prime"])
            problem, oracle = make_ssp_problem(mdp, scfg), ssp_oracle(mdp, scfg)
        else:
            if not 0 <= p["gamma"] < 1:
                raise ConfigError("must lie in [0, 1)", "gamma")
            sched = StepSchedule(cfg.alpha0, cfg.beta0, cfg.exponent_a)
            problem, oracle = make_polyak_problem(mdp, p["gamma"], sched), polyak_oracle(mdp, p["gamma"])
    else:
        from ..games import gne_oracle, load_game, make_gne_problem, random_game

        if cfg.model:
            game = load_game(cfg.model)
        else:
            game = random_game(p["players"], p["action_dim"], p["constraints"], rng)
        problem = make_gne_problem(game, p["alpha_prime"], p["beta_prime"], p["noise_scale"])
        oracle = gne_oracle(game)
    x0 = _initial(cfg.x0, problem.d1, "x0")
    y0 = _initial(cfg.y0, problem.d2, "y0")
    return problem, oracle, x0, y0


def _initial(values, dim: int, name: str) -> np.ndarray:
    if values is None:
        return np.zeros(dim)
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return np.full(dim, float(v[0]))
    if v.size != dim:
        raise ConfigError(f"expected 1 or {dim} values, got {v.size}", name)
    return v


def envelopes_for(problem: TtsProblem) -> tuple[MoreauEnvelope, MoreauEnvelope]:
    ex = MoreauEnvelope(problem.norm_x, q=1.0, dim=problem.d1)
    ey = MoreauEnvelope(problem.norm_y, q=1.0, dim=problem.d2)
    qx = default_q(ex.ell, problem.info.get("lambda"))
    qy = default_q(ey.ell, problem.info.get("mu"))
    return MoreauEnvelope(problem.norm_x, qx, problem.d1), MoreauEnvelope(problem.norm_y, qy, problem.d2)


@dataclass
class RunReport:
    config: ExperimentConfig
    summary: ReplicationSummary
    fits: dict[str, RateFit | None]
    checks: dict[str, float]
    wall_seconds: float
    files: dict[str, Path] = field(default_factory=dict)

    def fit(self, series: str) -> RateFit:
        return self.fits[series]


SUMMARY_SERIES = ("err_x_sq", "err_y_sq", "err_track_sq", "lyapunov")


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _header(cfg: ExperimentConfig) -> str:
    return f"# config_hash={cfg.config_hash} base_seed={cfg.base_seed} kind={cfg.kind}\n"


def write_summary(path: Path, cfg: ExperimentConfig, summary: ReplicationSummary) -> None:
    extra = sorted(summary.results[0].extra)
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg))
        w = csv.writer(fh, lineterminator="\n")
        head = ["n", "mean_err_x_sq", "se_x", "mean_err_y_sq", "se_y", "mean_err_track_sq", "se_track",
                "mean_lyapunov", "se_lyapunov"]
        head += [c for name in extra for c in (f"mean_{name}", f"se_{name}")]
        w.writerow(head)
        cols = [summary.checkpoints]
        for name in ("err_x_sq", "err_y_sq", "err_track_sq", "lyapunov", *extra):
            cols += [summary.mean(name), summary.stderr(name)]
        for i, n in enumerate(summary.checkpoints):
            w.writerow([int(n)] + [_fmt(c[i]) for c in cols[1:]])


def write_trajectories(path: Path, cfg: ExperimentConfig, summary: ReplicationSummary) -> None:
    extra = sorted(summary.results[0].extra)
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "seed", "n", "err_x_sq", "err_y_sq", "err_track_sq", "lyapunov",
                    "alpha_n", "beta_n", *extra])
        for rep, res in zip(summary.reps, summary.results):
            for i, n in enumerate(res.checkpoints):
                row = [rep, res.seed, int(n), _fmt(res.err_x_sq[i]), _fmt(res.err_y_sq[i]),
                       _fmt(res.err_track_sq[i]), _fmt(res.lyapunov[i]),
                       _fmt(summary.alpha[i]), _fmt(summary.beta[i])]
                w.writerow(row + [_fmt(res.extra[name][i]) for name in extra])


def write_rates(path: Path, cfg: ExperimentConfig, fits: dict[str, RateFit | None]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header(cfg))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "slope", "intercept", "r_squared", "n_lo", "n_hi", "super_polynomial"])
        for name, fit in fits.items():
            if fit is None:
                w.writerow([name, "nan", "nan", "nan", "", "", ""])
            else:
                w.writerow([name, *fit.row(), int(fit.super_polynomial)])


def fit_series(summary: ReplicationSummary, decades: float) -> dict[str, RateFit | None]:
    window = last_decades(summary.checkpoints, decades)
    names = [*SUMMARY_SERIES, *sorted(summary.results[0].extra)]
    fits = {}
    for name in names:
        try:
            fits[name] = fit_rate(summary.checkpoints, summary.mean(name), window)
        except (InsufficientPoints, NonPositiveValue) as exc:
            log.info("no rate fit for %s: %s", name, exc)
            fits[name] = None
    return fits


def run_experiment(cfg: ExperimentConfig, output_dir: str | Path | None = None,
                   write: bool = True) -> RunReport:
    """Run a configured experiment and write ``trajectory.csv``, ``summary.csv`` and ``rates.csv``."""
    t0 = time.perf_counter()
    problem, oracle, x0, y0 = build_problem(cfg)
    schedule = StepSchedule(cfg.alpha0, cfg.beta0, cfg.exponent_a)
    ck = log_checkpoints(cfg.horizon, cfg.checkpoints)
    summary = run_replications(problem, schedule, (x0, y0), cfg.horizon, ck, cfg.n_reps,
                               cfg.base_seed, oracle, envelopes_for(problem))
    fits = fit_series(summary, cfg.rate_window)
    track_res, slow_res = oracle.residuals(problem, oracle.y_star[None, :])
    checks = {"oracle_track_residual": track_res, "oracle_slow_residual": slow_res}
    report = RunReport(cfg, summary, fits, checks, time.perf_counter() - t0)
    if write:
        out = Path(output_dir) if output_dir is not None else cfg.resolved_output_dir()
        out.mkdir(parents=True, exist_ok=True)
        report.files = {"trajectory": out / "trajectory.csv", "summary": out / "summary.csv",
                        "rates": out / "rates.csv"}
        write_trajectories(report.files["trajectory"], cfg, summary)
        write_summary(report.files["summary"], cfg, summary)
        write_rates(report.files["rates"], cfg, fits)
    return report


def read_summary(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Checkpoints and every numeric column of a summary CSV (comment lines skipped)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows:
        raise ValueError(f"{path}: empty summary")
    head, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(head))
    cols = {name: data[:, j] for j, name in enumerate(head)}
    return cols.pop("n"), cols


def rate_report(summary_csv, window: tuple[int, int], series: str = "mean_err_x_sq",
                out: str | Path | None = None) -> RateFit:
    """Fit one column of a summary CSV over ``window`` and optionally write the fit."""
    n, cols = read_summary(summary_csv)
    if series not in cols:
        raise KeyError(f"column {series!r} not in {sorted(cols)}")
    fit = fit_rate(n, cols[series], window)
    if out is not None:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "slope", "intercept", "r_squared", "n_lo", "n_hi"])
            w.writerow([series, *fit.row()])
    return fit
