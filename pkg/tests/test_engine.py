from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttsa.engine import (
    FixedPointOracle,
    StepSchedule,
    TtsProblem,
    fit_rate,
    last_decades,
    log_checkpoints,
    run_replications,
    tts_run,
)
from ttsa.engine.driver import BatchRandom
from ttsa.engine.verify import (
    lyapunov_trace,
    martingale_mean_check,
    oracle_by_iteration,
    solve_x_star,
    verify_contraction,
    verify_xstar_lipschitz,
)
from ttsa.errors import (
    DimensionMismatch,
    InsufficientPoints,
    NonFiniteIterate,
    NonPositiveValue,
    NotContracting,
    PropertyViolated,
)
from ttsa.geometry import MoreauEnvelope, NormSpec
from ttsa.harness.experiment import generic_problem
from ttsa.markov_chain import FiniteMarkovChain

# ---------------------------------------------------------------- schedule


@settings(max_examples=50, deadline=None)
@given(a0=st.floats(0.01, 50), b0=st.floats(0.01, 50), a=st.floats(0.51, 1.0))
def test_schedule_inequalities(a0, b0, a):
    sched = StepSchedule(a0, b0, a)
    for name, slack in sched.check_bounds(20_000).items():
        assert slack >= -1e-12 * max(a0, b0) ** 2, name


def test_schedule_values():
    s = StepSchedule(2.0, 3.0, 0.75)
    assert s.alpha(0) == 2.0 and s.beta(0) == 3.0
    assert s.alpha(15) == pytest.approx(2.0 / 16**0.75)
    assert s.beta(9) == pytest.approx(0.3)
    assert s.ratio(15) == pytest.approx(s.beta(15) / s.alpha(15))


@pytest.mark.parametrize("a", [0.5, 0.3, 1.2])
def test_schedule_rejects_exponent(a):
    with pytest.raises(ValueError):
        StepSchedule(1.0, 1.0, a)


def test_schedule_rejects_nonpositive_gain():
    with pytest.raises(ValueError):
        StepSchedule(0.0, 1.0)


# ---------------------------------------------------------------- rates


def test_fit_recovers_power_law():
    n = log_checkpoints(10**6)
    fit = fit_rate(n, 3.0 * n**-0.8)
    assert fit.slope == pytest.approx(-0.8, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert not fit.super_polynomial


def test_fit_flags_geometric_decay():
    n = log_checkpoints(10**4)
    fit = fit_rate(n, np.exp(-n / 500.0))
    assert fit.slope < -2 and fit.super_polynomial


def test_fit_window_and_errors():
    n = np.array([10, 20, 50, 100, 200, 500, 1000])
    v = 1.0 / n
    fit = fit_rate(n, v, (20, 500))
    assert fit.n_points == 5 and fit.window == (20, 500)
    with pytest.raises(InsufficientPoints):
        fit_rate(n, v, (100, 1000))
    bad = v.copy()
    bad[-1] = 0.0
    with pytest.raises(NonPositiveValue):
        fit_rate(n, bad, (10, 1000))


def test_last_decades():
    assert last_decades([100, 1000, 100000]) == (10000, 100000)
    assert last_decades([100, 1000, 100000], 2) == (1000, 100000)


@settings(max_examples=40, deadline=None)
@given(slope=st.floats(-1.9, -0.1), c=st.floats(-5, 5))
def test_fit_exact_on_power_laws(slope, c):
    n = log_checkpoints(10**5, 20)
    fit = fit_rate(n, np.exp(c) * n.astype(float) ** slope)
    assert fit.slope == pytest.approx(slope, abs=1e-9)


# ---------------------------------------------------------------- driver


def _linear(fx=0.0, gy=0.0, chain=None, noise=None, noise_y=None):
    return TtsProblem(1, 1, f=lambda x, y, z: fx * x, g=lambda x, y, z: gy * y, chain=chain,
                      noise_x=noise, noise_y=noise_y)


def test_fixed_point_start_stays_put():
    prob, oracle = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0, markov=0, noise_x=0)
    res = tts_run(prob, StepSchedule(0.5, 0.5), oracle.x_star, oracle.y_star, horizon=1000,
                  checkpoints=[0, 10, 1000], oracle=oracle)
    np.testing.assert_allclose(res.err_x_sq, 0.0, atol=1e-28)
    np.testing.assert_allclose(res.err_y_sq, 0.0, atol=1e-28)


def test_deterministic_recursion_matches_product():
    sched = StepSchedule(0.5, 0.25, 0.6)
    res = tts_run(_linear(), sched, [2.0], [3.0], horizon=200, checkpoints=[200])
    n = np.arange(200)
    np.testing.assert_allclose(res.x[-1, 0], 2.0 * np.prod(1 - sched.alpha(n)), rtol=1e-12)
    np.testing.assert_allclose(res.y[-1, 0], 3.0 * np.prod(1 - sched.beta(n)), rtol=1e-12)


class _ConstantSteps:
    def alpha(self, n):
        return np.ones_like(np.asarray(n, dtype=float))

    beta = alpha


def test_unit_steps_halve_each_iteration():
    prob = TtsProblem(1, 1, f=lambda x, y, z: 0.5 * x, slow_noiseless=True, g_bar=lambda x, y: 0.5 * y)
    res = tts_run(prob, _ConstantSteps(), [3.0], [1.0], horizon=20, checkpoints=np.arange(21))
    np.testing.assert_array_equal(res.x[:, 0], 3.0 * 0.5 ** np.arange(21))
    np.testing.assert_array_equal(res.y[:, 0], 0.5 ** np.arange(21))


def test_identity_maps_leave_iterates_constant():
    prob = TtsProblem(2, 1, f=lambda x, y, z: x, g=lambda x, y, z: y)
    res = tts_run(prob, StepSchedule(0.7, 0.3), [1.0, -2.0], [4.0], horizon=500, checkpoints=[0, 50, 500])
    np.testing.assert_array_equal(res.x, np.tile([1.0, -2.0], (3, 1)))
    np.testing.assert_array_equal(res.y, np.full((3, 1), 4.0))


def test_tracking_error_shrinks_in_most_replications():
    prob, oracle = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0, markov=1, noise_x=1)
    # a small fast gain keeps the n = 100 error dominated by the initial offset; once both
    # errors are noise dominated they behave like scaled chi-square draws and the per-seed
    # ordering holds only about 87% of the time
    summ = run_replications(prob, StepSchedule(0.1, 0.5, 0.75), (np.zeros(1), np.zeros(1)),
                            10_000, [100, 10_000], 100, base_seed=3, oracle=oracle)
    track = summ.series("err_track_sq")
    assert np.sum(track[:, 1] < track[:, 0]) >= 95


def test_mean_error_decreases_with_unit_noise():
    prob, oracle = generic_problem(0.5, 0.0, 0.0, 0.0, 0.0, 0.0, markov=0, noise_x=1)
    summ = run_replications(prob, StepSchedule(0.5, 0.5, 2 / 3), (np.zeros(1), np.zeros(1)),
                            10**5, [10**3, 10**5], 200, oracle=oracle)
    m = summ.mean("err_x_sq")
    assert m[1] < m[0]


def test_noise_free_replications_have_zero_stderr():
    prob, oracle = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0, markov=0, noise_x=0)
    s = run_replications(prob, StepSchedule(1, 1), (np.zeros(1), np.zeros(1)), 1000, [10, 1000], 2,
                         oracle=oracle)
    np.testing.assert_array_equal(s.stderr("err_x_sq"), 0.0)


def test_replications_are_deterministic_and_order_free():
    prob, oracle = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0, noise_y=0.5)
    init = (np.zeros(1), np.zeros(1))
    ck = log_checkpoints(3000, 10)
    a = run_replications(prob, StepSchedule(1, 1), init, 3000, ck, 6, 11, oracle)
    b = run_replications(prob, StepSchedule(1, 1), init, 3000, ck, 6, 11, oracle,
                         reps=[5, 2, 0, 3, 1, 4], batch_size=2)
    np.testing.assert_array_equal(a.series("err_x_sq"), b.series("err_x_sq"))
    np.testing.assert_array_equal(a.mean("err_y_sq"), b.mean("err_y_sq"))
    single = tts_run(prob, StepSchedule(1, 1), *init, horizon=3000, checkpoints=ck, seed=14,
                     oracle=oracle)
    np.testing.assert_array_equal(single.err_x_sq, a.results[3].err_x_sq)


def test_stderr_nan_for_single_replication():
    prob, oracle = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0)
    s = run_replications(prob, StepSchedule(1, 1), (np.zeros(1), np.zeros(1)), 1000, [10, 1000], 1,
                         oracle=oracle)
    assert np.all(np.isnan(s.stderr("err_x_sq")))


def test_slow_noiseless_matches_general_driver():
    chain = FiniteMarkovChain([[0.9, 0.1], [0.5, 0.5]])
    shift = np.array([1.0, -5.0])

    def f(x, y, z):
        return 0.3 * x + 0.2 * y + shift[z][:, None]

    prob = TtsProblem(1, 1, f=f, chain=chain, slow_noiseless=True,
                      g_bar=lambda x, y: 0.5 * x + 0.25 * y,
                      noise_x=lambda x, y, z, zn, r: r.normal(1))
    sched = StepSchedule(1.0, 2.0, 1.0)
    a = tts_run(prob, sched, [1.0], [1.0], horizon=2000, checkpoints=[10, 2000], seed=4)
    b = tts_run(prob.as_general(), sched, [1.0], [1.0], horizon=2000, checkpoints=[10, 2000], seed=4)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_divergence_is_reported():
    prob = _linear(fx=5.0)
    with pytest.raises(NonFiniteIterate) as exc:
        tts_run(prob, StepSchedule(1.0, 1.0, 1.0), [1.0], [0.0], horizon=10_000, checkpoints=[10_000], seed=7)
    assert exc.value.step > 0 and exc.value.seed == 7


def test_initial_dimension_checked():
    with pytest.raises(DimensionMismatch):
        tts_run(_linear(), StepSchedule(1, 1), [1.0, 2.0], [0.0], horizon=10, checkpoints=[10])


def test_batch_random_rows_independent_of_batch():
    a = BatchRandom([3, 4, 5]).normal(2)
    b = BatchRandom([4]).normal(2)
    np.testing.assert_array_equal(a[1], b[0])
    s = BatchRandom([1, 2]).sphere(3)
    np.testing.assert_allclose(np.linalg.norm(s, axis=1), 1.0)


def test_log_checkpoints():
    ck = log_checkpoints(10**5, 30)
    assert ck[0] == 100 and ck[-1] == 10**5 and np.all(np.diff(ck) > 0)


# ---------------------------------------------------------------- verification helpers


def test_solve_x_star_linear():
    prob, oracle = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0)
    for y in [-3.0, 0.0, 2.5]:
        np.testing.assert_allclose(solve_x_star(prob, [y]), oracle.x_star_of_y(np.array([[y]]))[0],
                                   atol=1e-9)


def test_solve_x_star_examples():
    prob = TtsProblem(1, 1, f=lambda x, y, z: 0.5 * x + y, g=lambda x, y, z: y)
    np.testing.assert_allclose(solve_x_star(prob, [1.0]), [2.0], atol=1e-9)
    expanding = TtsProblem(1, 1, f=lambda x, y, z: 2.0 * x + 1.0, g=lambda x, y, z: y)
    with pytest.raises(NotContracting):
        solve_x_star(expanding, [0.0])


def test_oracle_by_iteration_matches_exact():
    prob, oracle = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0)
    it = oracle_by_iteration(prob, oracle.y_star)
    np.testing.assert_allclose(it.x_star, oracle.x_star, atol=1e-10)
    track, slow = oracle.residuals(prob, oracle.y_star[None, :])
    assert track <= 1e-12 and slow <= 1e-12


def test_lipschitz_check():
    prob = TtsProblem(1, 1, f=lambda x, y, z: 0.5 * x + y, g=lambda x, y, z: y)
    rng = np.random.default_rng(0)
    pairs = [(rng.standard_normal(1), rng.standard_normal(1)) for _ in range(20)]
    rep = verify_xstar_lipschitz(prob, pairs, L=1.0, lam=0.5)
    assert rep.max_ratio == pytest.approx(2.0, rel=1e-6) and rep.bound == 2.0
    with pytest.raises(PropertyViolated):
        verify_xstar_lipschitz(prob, pairs, L=0.5, lam=0.5)


def test_verify_contraction():
    rng = np.random.default_rng(0)
    r = verify_contraction(lambda x: 0.5 * x, NormSpec.euclidean(), 200, rng, dim=3)
    assert r == pytest.approx(0.5)
    M = np.array([[0.0, 0.9], [0.9, 0.0]])
    r = verify_contraction(lambda X: X @ M.T, NormSpec.max_abs(), 500, rng, dim=2, batched=True)
    assert r == pytest.approx(0.9)


def test_lyapunov_trace_at_fixed_point_is_zero():
    prob, oracle = generic_problem(0.2, 0.1, 1.0, 0.5, 0.5, 0.0)
    env = MoreauEnvelope(NormSpec.euclidean(), 0.1, 1)
    vals = lyapunov_trace(prob, oracle, env, env, [(oracle.x_star, oracle.y_star), ([0.0], [0.0])])
    assert vals[0] == 0.0 and vals[1] > 0.0


def test_martingale_mean_check_centred_noise():
    mean, se = martingale_mean_check(lambda x, y, z, zn, r: r.normal(2), [0.0, 0.0], [0.0], 0,
                                     lambda n: np.zeros(n, dtype=int),
                                     lambda n: BatchRandom(list(range(n))), 4000)
    assert np.all(np.abs(mean) <= 5 * se)


def test_fixed_point_oracle_shapes():
    o = FixedPointOracle(lambda ys: 2 * ys, np.array([1.0]), np.array([2.0]))
    assert o.x_star_of_y(np.ones((4, 1))).shape == (4, 1)
