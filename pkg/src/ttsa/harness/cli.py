"""``ttsa`` command-line entry point.

Exit codes: 0 success, 1 property failure, 2 configuration error, 3 divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from ..errors import ConfigError, InsufficientPoints, NonFiniteIterate, NonPositiveValue, TtsaError
from .properties import SCOPES

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _window(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(float(v)) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like LO:HI, got {text!r}") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError("window needs 0 < LO < HI")
    return lo, hi


def _cmd_run(args) -> int:
    from .config import load_config
    from .experiment import run_experiment

    cfg = load_config(args.config)
    report = run_experiment(cfg, args.output_dir)
    print(f"config {cfg.config_hash}: {cfg.kind}, {cfg.n_reps} reps, horizon {cfg.horizon}, "
          f"{report.wall_seconds:.1f}s")
    for name, fit in report.fits.items():
        if fit is None:
            print(f"  {name:>22}: no fit (series not positive)")
        else:
            flag = "  super-polynomial" if fit.super_polynomial else ""
            print(f"  {name:>22}: slope {fit.slope:+.4f}  r2 {fit.r_squared:.4f}  "
                  f"window [{fit.window[0]}, {fit.window[1]}]{flag}")
    for path in report.files.values():
        print(f"  wrote {path}")
    return EXIT_OK


def _cmd_props(args) -> int:
    from .properties import run_property_suite

    results = run_property_suite(args.scope, chain=args.chain, mdp=args.mdp, echo=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return EXIT_PROPERTY if failed else EXIT_OK


def _cmd_rate(args) -> int:
    from .experiment import rate_report

    fit = rate_report(args.input, args.window, args.series, args.out)
    print(f"{args.series}: slope {fit.slope:.17g} intercept {fit.intercept:.17g} "
          f"r2 {fit.r_squared:.17g} window {fit.window[0]}:{fit.window[1]}")
    return EXIT_OK


def _vec(v) -> str:
    return " ".join(f"{x:.17g}" for x in np.ravel(v))


def _cmd_oracle(args) -> int:
    if args.kind in ("avgcost", "discounted"):
        from ..mdp import avgcost_oracle, discounted_oracle, load_mdp

        mdp, i0 = load_mdp(args.model)
        if args.kind == "avgcost":
            sol = avgcost_oracle(mdp, i0 if args.reference_state is None else args.reference_state)
            print(f"rho_star {sol.rho_star:.17g}")
            print(f"reference_state {sol.reference_state}")
            print(f"q_star {_vec(sol.q_star)}")
        else:
            if args.gamma is None:
                raise ConfigError("required for the discounted oracle", "gamma")
            sol = discounted_oracle(mdp, args.gamma)
            print(f"gamma {sol.gamma:.17g}")
            print(f"q_star {_vec(sol.q_star)}")
    else:
        from ..games import kkt_oracle, kkt_residuals, load_game

        game = load_game(args.model)
        sol = kkt_oracle(game)
        print(f"x_star {_vec(sol.x_star)}")
        print(f"y_star {_vec(sol.y_star)}")
        print("residuals {:.3g} {:.3g}".format(*kkt_residuals(game, sol)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttsa", description="Two-time-scale stochastic approximation laboratory")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--output-dir", default=None, help="overrides the config and TTSA_OUTPUT_DIR")
    run.set_defaults(func=_cmd_run)

    props = sub.add_parser("props", help="run the registered property checks")
    props.add_argument("--scope", default="all", choices=["all", *SCOPES])
    props.add_argument("--chain", default=None, help="chain file to validate as part of markov_chain")
    props.add_argument("--mdp", default=None, help="MDP file to validate as part of mdp_suite")
    props.set_defaults(func=_cmd_props)

    rate = sub.add_parser("rate", help="fit a decay exponent to a summary CSV")
    rate.add_argument("--in", dest="input", required=True)
    rate.add_argument("--window", type=_window, required=True, help="LO:HI checkpoint range")
    rate.add_argument("--series", default="mean_err_x_sq")
    rate.add_argument("--out", default=None)
    rate.set_defaults(func=_cmd_rate)

    orc = sub.add_parser("oracle", help="solve a model exactly")
    orc.add_argument("kind", choices=["avgcost", "discounted", "kkt"])
    orc.add_argument("--model", required=True)
    orc.add_argument("--gamma", type=float, default=None)
    orc.add_argument("--reference-state", type=int, default=None)
    orc.set_defaults(func=_cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteIterate as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InsufficientPoints, NonPositiveValue) as exc:
        print(f"rate fit failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TtsaError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
