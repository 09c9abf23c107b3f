from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ttsa.errors import ConfigError
from ttsa.harness import cli
from ttsa.harness.config import OUTPUT_ENV, load_config, parse_config
from ttsa.harness.experiment import build_problem, read_summary, run_experiment
from ttsa.harness.properties import SCOPES, run_property_suite
from ttsa.games import random_game, save_game
from ttsa.mdp import random_mdp, save_mdp

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

GENERIC = """
[problem]
kind = generic
cx = 0
gx = 0
cy = 0
markov = 0
noise_x = 0
x0 = 1
[schedule]
alpha0 = 0.5
beta0 = 0.5
exponent_a = 0.6
[run]
horizon = 10000
n_reps = 1
output_dir = {out}
"""

NOISY = """
[problem]
kind = generic
[schedule]
alpha0 = 1
beta0 = 1
exponent_a = 0.75
[run]
horizon = 2e3
n_reps = 4
base_seed = 5
checkpoints = 12
output_dir = {out}
"""


def write(tmp_path, text, name="c.ini", **fmt):
    p = tmp_path / name
    p.write_text(text.format(**fmt))
    return p


# ---------------------------------------------------------------- config


def test_parse_generic_config(tmp_path):
    cfg = load_config(write(tmp_path, NOISY, out=tmp_path / "o"))
    assert cfg.kind == "generic" and cfg.horizon == 2000 and cfg.n_reps == 4
    assert cfg.params["fx"] == 0.2 and cfg.base_seed == 5
    assert len(cfg.config_hash) == 16


def test_hash_tracks_content(tmp_path):
    a = parse_config(NOISY.format(out="x"))
    b = parse_config(NOISY.format(out="x").replace("base_seed = 5", "base_seed = 6"))
    assert a.config_hash != b.config_hash
    assert a.config_hash == parse_config(NOISY.format(out="y")).config_hash


@pytest.mark.parametrize(
    "edit, field",
    [
        (("exponent_a = 0.75", "exponent_a = 0.4"), "exponent_a"),
        (("horizon = 2e3", "horizon = 500"), "horizon"),
        (("n_reps = 4", "n_reps = 0"), "n_reps"),
        (("kind = generic", "kind = bandit"), "kind"),
        (("alpha0 = 1\n", ""), "alpha0"),
        (("kind = generic", "kind = generic\nwobble = 3"), "wobble"),
        (("beta0 = 1", "beta0 = fast"), "beta0"),
    ],
)
def test_config_errors_name_the_field(edit, field):
    text = NOISY.format(out="o").replace(*edit)
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field and str(exc.value).startswith(field)


def test_missing_section():
    with pytest.raises(ConfigError):
        parse_config("[problem]\nkind = generic\n")


def test_shipped_configs_parse():
    for path in CONFIGS.glob("*.ini"):
        cfg = load_config(path)
        problem, oracle, x0, y0 = build_problem(cfg)
        assert x0.shape == (problem.d1,) and y0.shape == (problem.d2,)


def test_output_dir_resolution():
    cfg = parse_config(NOISY.format(out="cfg_dir"))
    assert cfg.resolved_output_dir({}) == Path("cfg_dir")
    assert cfg.resolved_output_dir({OUTPUT_ENV: "/elsewhere"}) == Path("/elsewhere")


def test_model_file_relative_to_config(tmp_path):
    save_mdp(random_mdp(3, 2, np.random.default_rng(0)), tmp_path / "m.txt", reference_state=1)
    text = ("[problem]\nkind = ssp\nmodel = m.txt\n[schedule]\nalpha0 = 1\nbeta0 = 1\nexponent_a = 1\n"
            "[run]\nhorizon = 1000\nn_reps = 2\n")
    cfg = load_config(write(tmp_path, text))
    problem, *_ = build_problem(cfg)
    assert problem.info["reference_state"] == 1


# ---------------------------------------------------------------- experiments


def test_noise_free_run_is_super_polynomial(tmp_path):
    cfg = load_config(write(tmp_path, GENERIC, out=tmp_path / "o"))
    rep = run_experiment(cfg)
    fit = rep.fits["err_x_sq"]
    assert fit.slope <= -2 and fit.super_polynomial
    for path in rep.files.values():
        assert path.read_text().startswith(f"# config_hash={cfg.config_hash} base_seed=0 kind=generic\n")


def test_summary_csv_deterministic(tmp_path):
    cfg = load_config(write(tmp_path, NOISY, out="unused"))
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    for name in ("summary", "trajectory", "rates"):
        assert a.files[name].read_bytes() == b.files[name].read_bytes()
    n, cols = read_summary(a.files["summary"])
    np.testing.assert_array_equal(n, a.summary.checkpoints)
    np.testing.assert_array_equal(cols["mean_err_x_sq"], a.summary.mean("err_x_sq"))
    lines = a.files["trajectory"].read_text().splitlines()
    assert lines[1].startswith("rep,seed,n,") and len(lines) == 2 + 4 * len(n)


def test_gne_run_reports_metrics(tmp_path):
    text = ("[problem]\nkind = gne\nplayers = 2\naction_dim = 1\nconstraints = 1\n[schedule]\n"
            "alpha0 = 1\nbeta0 = 50\nexponent_a = 0.6666666666666666\n[run]\nhorizon = 2000\nn_reps = 3\n")
    rep = run_experiment(load_config(write(tmp_path, text)), write=False)
    assert "gne_error" in rep.fits and "constraint_violation" in rep.summary.results[0].extra
    assert rep.checks["oracle_track_residual"] <= 1e-10


# ---------------------------------------------------------------- property suite


def test_property_suite_scopes_pass():
    for scope in ("geometry", "markov_chain"):
        results = run_property_suite(scope)
        assert results and all(r.passed for r in results), [r.line() for r in results if not r.passed]


def test_property_suite_unknown_scope():
    with pytest.raises(ValueError):
        run_property_suite("nonsense")
    assert "markov_chain" in SCOPES


def test_corrupted_chain_file_fails(tmp_path):
    (tmp_path / "bad.txt").write_text("2\n1 0\n0 1\n")
    results = run_property_suite("markov_chain", chain=str(tmp_path / "bad.txt"))
    bad = [r for r in results if not r.passed]
    assert len(bad) == 1 and "ReducibleChain" in bad[0].detail


# ---------------------------------------------------------------- command line


def test_cli_run_and_rate(tmp_path, capsys):
    cfg = write(tmp_path, GENERIC, out=tmp_path / "o")
    assert cli.main(["run", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "super-polynomial" in out
    summary = tmp_path / "o" / "summary.csv"
    assert cli.main(["rate", "--in", str(summary), "--window", "1000:10000",
                     "--out", str(tmp_path / "fit.csv")]) == 0
    assert (tmp_path / "fit.csv").read_text().startswith("series,slope")
    # too narrow a window leaves fewer than five points
    assert cli.main(["rate", "--in", str(summary), "--window", "9000:10000"]) == 2


def test_cli_env_overrides_output(tmp_path, monkeypatch):
    cfg = write(tmp_path, GENERIC, out=tmp_path / "cfg_out")
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    assert cli.main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "env_out" / "summary.csv").exists()
    assert not (tmp_path / "cfg_out").exists()
    assert cli.main(["run", "--config", str(cfg), "--output-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "summary.csv").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, GENERIC.replace("exponent_a = 0.6", "exponent_a = 0.4"), out="o")
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "exponent_a" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_divergence_exit_code(tmp_path, capsys):
    text = GENERIC.replace("alpha0 = 0.5", "alpha0 = 1e6").replace("cx = 0", "cx = 0\nfx = 0.9")
    assert cli.main(["run", "--config", str(write(tmp_path, text, out=tmp_path / "o"))]) == 3
    assert "diverged" in capsys.readouterr().err


def test_cli_props(tmp_path, capsys):
    assert cli.main(["props", "--scope", "geometry"]) == 0
    (tmp_path / "bad.txt").write_text("2\n0.5 0.6\n0.5 0.5\n")
    assert cli.main(["props", "--scope", "markov_chain", "--chain", str(tmp_path / "bad.txt")]) == 1
    assert "FAIL markov_chain.chain_file" in capsys.readouterr().out


def test_cli_oracles(tmp_path, capsys):
    mdp = tmp_path / "m.txt"
    mdp.write_text("2 1 0\n1\n3\n0 1\n1 0\n1\n1\n")
    assert cli.main(["oracle", "avgcost", "--model", str(mdp)]) == 0
    out = capsys.readouterr().out
    assert float(out.split("rho_star ")[1].split()[0]) == pytest.approx(2.0, abs=1e-10)
    assert cli.main(["oracle", "discounted", "--model", str(mdp)]) == 2
    assert cli.main(["oracle", "discounted", "--model", str(mdp), "--gamma", "0.5"]) == 0
    assert "q_star" in capsys.readouterr().out
    game = tmp_path / "g.txt"
    save_game(random_game(2, 2, 1, np.random.default_rng(0)), game)
    assert cli.main(["oracle", "kkt", "--model", str(game)]) == 0
    assert "x_star" in capsys.readouterr().out
    assert cli.main(["oracle", "kkt", "--model", str(tmp_path / "nope.txt")]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ttsa", "props", "--scope", "geometry"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0 and "properties passed" in proc.stdout
