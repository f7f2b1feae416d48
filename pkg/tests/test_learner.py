import dataclasses

import numpy as np
import pytest

from cvartrader.errors import InfeasibleError, InsufficientDataError, NumericError, ParameterError
from cvartrader.learner import (
    InnerInfo,
    LearnerConfig,
    LearnerState,
    inner_optimize,
    init_state,
    objective_subgradient,
    objective_value,
    run_online,
)
from cvartrader.market_data import PriceSeries
from cvartrader.policy import PolicyParams, evaluate_policy
from cvartrader.risk import RewardWindow
from cvartrader.synth import generate
from oracles import central_gradient


def make_state(theta, fixed_rewards, vartheta=0.1, prev=0.0, scale=1.0, activation="linear"):
    window = RewardWindow(len(fixed_rewards) + 1, list(fixed_rewards) + [0.0])
    return LearnerState(PolicyParams(theta, activation), vartheta, prev, window, reward_scale=scale)


def test_config_validation():
    for bad in (dict(gamma=1.0), dict(alpha=0.0), dict(alpha=1.0), dict(lam=2.0), dict(inner_iters=0),
                dict(delta=-0.1), dict(activation="tanh", long_only=True), dict(filter_span=0),
                dict(allocation=True)):
        with pytest.raises(ParameterError):
            LearnerConfig(**bad)
    assert LearnerConfig(gamma=0.9).window_capacity == 52
    assert LearnerConfig(gamma=0.99).window_capacity == 102
    assert LearnerConfig(lags_n=8).dim == 10


def test_subgradient_zero_when_nothing_active():
    cfg = LearnerConfig(gamma=0.5, lam=0.0, delta=0.0, lags_n=0)
    # newest loss is the smallest, so it sits below VaR
    st = make_state([0.0, 0.5], [-0.05, -0.06, -0.07])
    g, v = objective_subgradient(st, cfg, [0.1, 1.0], 0.02)
    np.testing.assert_array_equal(g, 0.0)
    assert v == 0.0


def test_norm_subgradient_at_origin_is_zero():
    cfg = LearnerConfig(gamma=0.5, lam=0.1, delta=0.0, lags_n=0)
    st = make_state([0.0, 0.0], [-0.05, -0.06, -0.07])
    g, _ = objective_subgradient(st, cfg, [0.1, 1.0], 0.0)
    np.testing.assert_array_equal(g, 0.0)


def test_subgradient_tail_example():
    cfg = LearnerConfig(gamma=0.5, lam=0.0, delta=0.0, lags_n=0)
    # newest reward 0.5 * 0.02 = 0.01 is the largest loss among {-0.05, -0.06, -0.07, -0.01}
    st = make_state([0.0, 0.5], [0.05, 0.06, 0.07])
    g, v = objective_subgradient(st, cfg, [0.1, 1.0], 0.02)
    np.testing.assert_allclose(g, [-0.001, -0.01], rtol=1e-12)
    assert v == 0.0


def _random_point(rng, barrier, activation="linear"):
    k = 4
    x = np.append(rng.normal(0, 1, k), 1.0)
    while True:
        theta = rng.normal(0, 0.2, k + 1)
        g = theta @ x
        if activation != "linear" or abs(abs(g) - 1) > 1e-3:
            break
    fixed = list(rng.normal(0, 1, 9))
    r = float(rng.normal(0, 1))
    prev = float(rng.uniform(-1, 1))
    pi = evaluate_policy(PolicyParams(theta, activation), x)
    vartheta = abs(pi - prev) + float(rng.uniform(0.05, 0.5)) if barrier else float(rng.uniform(0, 0.5))
    return x, theta, fixed, r, prev, vartheta


def _away_from_kinks(st, cfg, x, r):
    # skip points where the newest loss coincides with another window sample
    pi = evaluate_policy(st.params, x)
    loss = -(pi * r - cfg.delta * st.vartheta) * st.reward_scale
    fixed = -np.asarray(st.window.rewards[:-1])
    return np.min(np.abs(fixed - loss)) > 1e-4


@pytest.mark.parametrize("barrier", [False, True])
@pytest.mark.parametrize("activation", ["linear", "tanh"])
def test_subgradient_matches_finite_differences(barrier, activation):
    rng = np.random.default_rng(7 + barrier)
    cfg = LearnerConfig(gamma=0.7, lam=0.05, delta=0.2 if barrier else 0.0, barrier_mu0=0.01,
                        lags_n=3, activation=activation)
    checked = 0
    while checked < 100:
        x, theta, fixed, r, prev, vth = _random_point(rng, barrier, activation)
        st = make_state(theta, fixed, vth, prev, scale=1.3, activation=activation)
        if not _away_from_kinks(st, cfg, x, r):
            continue
        mu = 0.01 if barrier else 0.0

        def f_theta(th):
            return objective_value(dataclasses.replace(st, params=PolicyParams(th, activation)), cfg, x, r, mu=mu)

        def f_vth(v):
            return objective_value(dataclasses.replace(st, vartheta=float(v[0])), cfg, x, r, mu=mu)

        g, v = objective_subgradient(st, cfg, x, r, mu=mu)
        num_g = central_gradient(f_theta, theta, h=1e-7)
        num_v = central_gradient(f_vth, [vth], h=1e-7)[0]
        assert np.linalg.norm(g - num_g) <= 1e-5 * max(np.linalg.norm(num_g), 1e-8)
        assert abs(v - num_v) <= 1e-5 * max(abs(num_v), 1e-8)
        checked += 1


def test_gamma_zero_matches_mean_reward_gradient():
    rng = np.random.default_rng(3)
    cfg = LearnerConfig(gamma=0.0, lam=0.0, delta=0.0, lags_n=3)
    for _ in range(200):
        x, theta, fixed, r, prev, vth = _random_point(rng, False)
        st = make_state(theta, fixed, vth, prev)
        # only the newest reward depends on theta: d(-mean R)/dtheta = -r f'(g) x / m
        g = theta @ x
        slope = 1.0 if abs(g) < 1 else 0.0
        expected = -r * slope * x / (len(fixed) + 1)
        np.testing.assert_allclose(objective_subgradient(st, cfg, x, r)[0], expected, rtol=1e-12, atol=1e-15)


def test_infeasible_slack_raises():
    cfg = LearnerConfig(gamma=0.5, delta=0.001, lags_n=0)
    st = make_state([0.0, 0.5], [0.1, 0.2], vartheta=0.1, prev=0.0)
    with pytest.raises(InfeasibleError):
        objective_subgradient(st, cfg, [0.0, 1.0], 0.01, mu=1.0)


def test_zero_step_leaves_state_unchanged():
    cfg = LearnerConfig(gamma=0.5, inner_iters=1, delta=0.001, lags_n=1)
    cfg.alpha = 0.0
    st = make_state([0.1, -0.2, 0.3], [0.01, -0.02, 0.03], vartheta=0.5, prev=0.2)
    info = InnerInfo()
    out = inner_optimize(st, cfg, [0.4, 0.1, 1.0], 0.02, info)
    np.testing.assert_array_equal(out.theta, st.theta)
    assert out.vartheta == st.vartheta
    assert len(info.estimates) == 1


def test_cvar_estimate_decreases_within_inner_loop():
    good = 0
    for trial in range(10):
        rng = np.random.default_rng(100 + trial)
        cfg = LearnerConfig(gamma=0.8, delta=0.0, lags_n=2)
        x = np.append(rng.normal(0, 1, 3), 1.0)
        r = 0.5 * x[0] + 0.1 * rng.normal()  # one profitable linear pattern
        st = make_state(rng.normal(0, 0.1, 4), rng.normal(0, 0.5, 20))
        info = InnerInfo()
        inner_optimize(st, cfg, x, r, info)
        cvars = [c for _, c in info.estimates]
        assert len(cvars) == cfg.inner_iters
        good += all(b <= a + 1e-12 for a, b in zip(cvars, cvars[1:]))
    assert good >= 9


def test_barrier_pushes_vartheta_up_near_boundary():
    cfg = LearnerConfig(gamma=0.5, delta=0.001, barrier_mu0=1.0, lags_n=0)
    st = make_state([0.0, 0.3], [0.01, 0.02, 0.03], vartheta=0.3 + 1e-5, prev=0.0)
    _, v = objective_subgradient(st, cfg, [0.0, 1.0], 0.01)
    assert v < 0
    out = inner_optimize(st, cfg, [0.0, 1.0], 0.01)
    assert out.vartheta > st.vartheta


def test_slacks_positive_after_inner_optimize():
    rng = np.random.default_rng(9)
    cfg = LearnerConfig(gamma=0.9, delta=0.0015, lags_n=3, barrier_mu0=1e-3)
    for _ in range(50):
        x, theta, fixed, r, prev, vth = _random_point(rng, True)
        st = make_state(theta, fixed, vth, prev)
        out = inner_optimize(st, cfg, x, r)
        pi = evaluate_policy(out.params, x)
        assert pi - prev + out.vartheta > 0 and prev - pi + out.vartheta > 0


def test_non_finite_input_names_iteration():
    cfg = LearnerConfig(gamma=0.5, lags_n=0)
    st = make_state([0.1, 0.1], [0.01, 0.02])
    with pytest.raises(NumericError) as exc:
        inner_optimize(st, cfg, [1.0, 1.0], float("nan"))
    assert exc.value.iteration == 1


def test_init_state():
    st = init_state(LearnerConfig(lags_n=3))
    np.testing.assert_array_equal(st.theta, np.zeros(5))
    assert st.vartheta == 0.1 and st.window.capacity == 52
    a = init_state(LearnerConfig(init_scale=0.1, seed=4)).theta
    b = init_state(LearnerConfig(init_scale=0.1, seed=4)).theta
    np.testing.assert_array_equal(a, b)
    assert np.any(a != 0)


class GuardedPrices:
    """Price container that records the largest index read."""

    def __init__(self, prices):
        self._p = np.asarray(prices, dtype=float)
        self.max_index = -1

    def __len__(self):
        return len(self._p)

    def __getitem__(self, i):
        self.max_index = max(self.max_index, int(i))
        return self._p[i]


class GuardedSeries:
    def __init__(self, series):
        self.prices = GuardedPrices(series.prices)
        self.timestamps = series.timestamps


def test_no_lookahead_access():
    series = GuardedSeries(generate("trend", 400, 2))
    seen = []

    def on_step(t, pos):
        assert series.prices.max_index <= t + 1
        seen.append(t)

    run_online(series, LearnerConfig(gamma=0.5, delta=0.001), on_step=on_step)
    assert seen and seen[-1] == 399


def test_future_prices_do_not_change_past_positions():
    base = generate("trend", 500, 5)
    cut = 300
    alt = base.prices.copy()
    alt[cut + 1:] *= np.linspace(1.0, 1.5, len(alt) - cut - 1)
    cfg = LearnerConfig(gamma=0.9, delta=0.001)
    a = run_online(base, cfg)
    b = run_online(PriceSeries(base.timestamps, alt), cfg)
    np.testing.assert_array_equal(a.positions[: cut + 1], b.positions[: cut + 1])
    assert not np.array_equal(a.positions, b.positions)


def test_deterministic_report():
    series = generate("regime-switch", 800, 3)
    cfg = LearnerConfig(gamma=0.9, delta=0.001, init_scale=0.05, seed=11)
    a, b = run_online(series, cfg), run_online(series, cfg)
    for name in ("equity", "positions", "varthetas", "rewards_aux", "rewards_realized", "costs"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.metrics_dict() == b.metrics_dict()
    assert a.risk_trace == b.risk_trace


def test_constant_prices_stay_flat():
    series = PriceSeries.from_prices([100.0] * 300)
    rep = run_online(series, LearnerConfig(gamma=0.9, delta=0.001))
    np.testing.assert_array_equal(rep.equity, 1.0)
    assert rep.metrics_dict()["total_cost"] == 0.0
    np.testing.assert_array_equal(rep.positions, 0.0)


def test_report_shapes_and_warmup():
    cfg = LearnerConfig(gamma=0.5, lags_n=4)
    rep = run_online(generate("random-walk", 200, 0), cfg)
    assert len(rep.equity) == 200 and len(rep.positions) == 200
    # first action needs lags_n + 1 filtered returns
    np.testing.assert_array_equal(rep.positions[: cfg.lags_n + 1], 0.0)
    assert rep.diagnostics["learning_steps"] == len(rep.risk_trace) == 200 - (cfg.lags_n + 2)
    assert rep.config_echo["gamma"] == 0.5


def test_too_short_series():
    with pytest.raises(InsufficientDataError):
        run_online(PriceSeries.from_prices([1.0] * 10), LearnerConfig(lags_n=8))


def test_barrier_run_has_no_slack_violations():
    rep = run_online(generate("regime-switch", 2000, 1), LearnerConfig(gamma=0.9, delta=0.0015))
    d = rep.diagnostics
    assert d["barrier_active"]
    assert d["barrier_slack_violations"] == 0
    assert d["min_barrier_slack"] > 0


def test_realized_and_aux_rewards_reconcile():
    rep = run_online(generate("trend", 600, 4), LearnerConfig(gamma=0.5, delta=0.002))
    trades = np.abs(np.diff(rep.positions, prepend=0.0))
    gross = rep.rewards_realized + rep.costs
    np.testing.assert_allclose(rep.costs[1:], 0.002 * trades[:-1], atol=1e-15)
    np.testing.assert_allclose(rep.rewards_aux[1:], gross[1:] - 0.002 * rep.varthetas[:-1], atol=1e-15)
    assert np.all(rep.varthetas[1:] >= trades[1:] - 1e-15)


def test_profitable_on_rising_prices():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        prices = 100 * np.exp(np.cumsum(0.0005 + 0.002 * rng.standard_normal(2000)))
        rep = run_online(PriceSeries.from_prices(prices), LearnerConfig(gamma=0.0, delta=0.0, seed=seed))
        wins += rep.terminal_wealth > 1.0
    assert wins >= 18
