"""Online CVaR-sensitive policy learning.

Each market step the learner senses a state, takes a position, observes the
reward and then runs a short inner loop of subgradient steps on

    J(theta, vartheta) = cvar_hat + lam * ||theta||_2
                         - mu_i * [log(pi - pi_prev + vartheta) + log(pi_prev - pi + vartheta)]

where ``cvar_hat`` is the order-statistic CVaR estimate over the last
``N + 2`` rewards. Only the newest reward depends on the parameters; older
rewards were produced by earlier parameters and enter as constants. The
barrier coefficient decays as ``mu_i = mu0 / i`` within each inner loop and
is only active when trading costs are charged (``delta > 0``).

Transaction costs follow the epigraph form: the learner is charged
``delta * vartheta`` with ``vartheta >= |pi_t - pi_{t-1}|`` kept strictly
feasible by the barrier and a backtracking line search (strict feasibility
plus Armijo decrease).
The realized, economically charged cost ``delta * |pi_t - pi_{t-1}|`` is
accounted separately in the report.

With ``standardize=True`` (default) state features and the learner's
rewards are divided by a causal running volatility of raw returns, which
keeps the gradient scale independent of the asset's price volatility.
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convexity import audit_run
from .errors import InfeasibleError, InsufficientDataError, NumericError, ParameterError
from .market_data import EmaFilter, PriceSeries, ema_weight
from .metrics import BacktestReport, summarize
from .policy import PolicyParams, activate, check_activation
from .risk import RewardWindow, RiskEstimate, TailEvaluator, check_gamma

FEASIBILITY_EPS = 1e-6
MAX_BACKTRACKS = 40
ARMIJO_C = 1e-4
MIN_VOL = 1e-6


@dataclass
class LearnerConfig:
    gamma: float = 0.9
    alpha: float = 0.01
    lam: float = 0.01
    window_n: Optional[int] = None  # None: 50 for gamma <= 0.95, else 100
    lags_n: int = 8
    inner_iters: int = 10
    delta: float = 0.0
    barrier_mu0: float = 1e-3
    vartheta0: float = 0.1
    seed: int = 0
    activation: str = "linear"
    long_only: bool = False
    gain: float = 1.0
    filter_span: int = 5
    standardize: bool = True
    vol_span: int = 100
    init_scale: float = 0.0
    allocation: bool = False
    riskless_rate: float = 0.0
    w0: float = 1.0

    def __post_init__(self):
        check_gamma(self.gamma)
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.window_n is None:
            self.window_n = 50 if self.gamma <= 0.95 else 100
        if self.window_n < 0:
            raise ParameterError(f"window N must be >= 0, got {self.window_n}")
        if self.lags_n < 0:
            raise ParameterError(f"lag count must be >= 0, got {self.lags_n}")
        if self.inner_iters < 1:
            raise ParameterError(f"inner iterations must be >= 1, got {self.inner_iters}")
        if self.delta < 0:
            raise ParameterError(f"cost rate must be non-negative, got {self.delta}")
        if self.barrier_mu0 < 0:
            raise ParameterError(f"barrier coefficient must be non-negative, got {self.barrier_mu0}")
        if self.vartheta0 <= 0:
            raise ParameterError(f"initial vartheta must be positive, got {self.vartheta0}")
        if self.init_scale < 0:
            raise ParameterError(f"init scale must be non-negative, got {self.init_scale}")
        if self.w0 <= 0:
            raise ParameterError(f"capital must be positive, got {self.w0}")
        check_activation(self.activation, self.long_only)
        if self.allocation and not (self.long_only or self.activation == "sigmoid"):
            raise ParameterError("allocation mode requires a long-only policy")
        ema_weight(self.filter_span)
        ema_weight(self.vol_span)

    @property
    def window_capacity(self) -> int:
        return self.window_n + 2

    @property
    def dim(self) -> int:
        return self.lags_n + 2

    @property
    def barrier_active(self) -> bool:
        return self.delta > 0 and self.barrier_mu0 > 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class LearnerState:
    params: PolicyParams
    vartheta: float
    prev_position: float  # executed position before the one being learned from
    window: RewardWindow
    step: int = 0
    position: float = 0.0  # last executed position
    reward_scale: float = 1.0

    @property
    def theta(self) -> np.ndarray:
        return self.params.theta


def init_state(config: LearnerConfig) -> LearnerState:
    if config.init_scale > 0:
        rng = np.random.default_rng(config.seed)
        theta = config.init_scale * rng.standard_normal(config.dim)
    else:
        theta = np.zeros(config.dim)
    params = PolicyParams(theta, config.activation, config.long_only, config.gain)
    return LearnerState(params, config.vartheta0, 0.0, RewardWindow(config.window_capacity))


@dataclass
class _Terms:
    value: float
    theta_grad: np.ndarray
    vartheta_grad: float
    var: float
    cvar: float
    position: float
    slacks: tuple


def _terms(theta, vartheta, x, r, prev, scale, tail, cfg, mu, want_value=False) -> _Terms:
    g = float(theta @ x)
    pi, fp = activate(g, cfg.activation, cfg.long_only, cfg.gain)
    if cfg.allocation:
        r_eff, base = r - cfg.riskless_rate, cfg.riskless_rate
    else:
        r_eff, base = r, 0.0
    reward = (pi * r_eff + base - cfg.delta * vartheta) * scale
    var, cvar, w = tail.evaluate(-reward)
    coef = -w * scale * r_eff * fp
    vgrad = w * scale * cfg.delta
    norm = math.sqrt(float(theta @ theta))
    grad = coef * x
    if cfg.lam > 0 and norm > 0:
        grad = grad + (cfg.lam / norm) * theta
    value = cvar + cfg.lam * norm
    s1 = pi - prev + vartheta
    s2 = prev - pi + vartheta
    if mu > 0:
        if s1 <= 0 or s2 <= 0:
            raise InfeasibleError(f"barrier slack non-positive: ({s1}, {s2})")
        grad = grad - (mu * fp * (1.0 / s1 - 1.0 / s2)) * x
        vgrad -= mu * (1.0 / s1 + 1.0 / s2)
        if want_value:
            value -= mu * (math.log(s1) + math.log(s2))
    return _Terms(value, grad, vgrad, var, cvar, pi, (s1, s2))


def _tail_for(state: LearnerState, config: LearnerConfig) -> TailEvaluator:
    if len(state.window) == 0:
        raise InsufficientDataError("reward window is empty")
    return TailEvaluator(state.window.rewards[:-1], config.gamma)


def _default_mu(config: LearnerConfig, mu):
    if mu is not None:
        return mu
    return config.barrier_mu0 if config.barrier_active else 0.0


def objective_value(state: LearnerState, config: LearnerConfig, x, r: float, mu: float | None = None) -> float:
    """Regularized barrier objective with the newest reward re-evaluated at ``state``."""
    x = np.asarray(x, dtype=float)
    t = _terms(state.theta, state.vartheta, x, r, state.prev_position, state.reward_scale,
               _tail_for(state, config), config, _default_mu(config, mu), want_value=True)
    return t.value


def objective_subgradient(state: LearnerState, config: LearnerConfig, x, r: float,
                          mu: float | None = None) -> tuple[np.ndarray, float]:
    """Subgradient of the objective in ``theta`` and ``vartheta``.

    The CVaR term contributes ``c * d(loss_newest)``, where ``c`` is
    ``1/(m(1-gamma))`` when the newest loss lies beyond VaR, ``0`` when it
    lies below, and ``1 - (#losses above)/(m(1-gamma))`` when the newest
    loss is itself the VaR order statistic (so that ``gamma = 0`` recovers
    the gradient of the mean loss). The norm's subgradient at 0 is 0.
    """
    x = np.asarray(x, dtype=float)
    t = _terms(state.theta, state.vartheta, x, r, state.prev_position, state.reward_scale,
               _tail_for(state, config), config, _default_mu(config, mu))
    return t.theta_grad, t.vartheta_grad


@dataclass
class InnerInfo:
    estimates: list = field(default_factory=list)  # (var, cvar) at each iterate
    min_slack: float = math.inf
    slack_violations: int = 0
    backtracks: int = 0
    rejected_steps: int = 0


def _restore(vartheta, pi, prev):
    gap = abs(pi - prev)
    if vartheta <= gap:
        return gap + FEASIBILITY_EPS
    return vartheta


def _value(theta, vartheta, x, r, prev, scale, tail, cfg, mu) -> float:
    """Augmented objective, ``inf`` outside the barrier's domain."""
    g = float(theta @ x)
    pi, _ = activate(g, cfg.activation, cfg.long_only, cfg.gain)
    s1 = pi - prev + vartheta
    s2 = prev - pi + vartheta
    if s1 <= 0 or s2 <= 0:
        return math.inf
    if cfg.allocation:
        reward = pi * (r - cfg.riskless_rate) + cfg.riskless_rate
    else:
        reward = pi * r
    reward = (reward - cfg.delta * vartheta) * scale
    _, cvar, _ = tail.evaluate(-reward)
    return cvar + cfg.lam * math.sqrt(float(theta @ theta)) - mu * (math.log(s1) + math.log(s2))


def _inner_loop(theta, vartheta, x, r, prev, scale, tail, cfg, info: InnerInfo, step=None):
    act, lo, gain = cfg.activation, cfg.long_only, cfg.gain
    barrier = cfg.barrier_active
    pi, _ = activate(float(theta @ x), act, lo, gain)
    vartheta = _restore(vartheta, pi, prev)
    alpha = cfg.alpha
    for i in range(1, cfg.inner_iters + 1):
        mu = cfg.barrier_mu0 / i if barrier else 0.0
        t = _terms(theta, vartheta, x, r, prev, scale, tail, cfg, mu, want_value=barrier)
        info.estimates.append((t.var, t.cvar))
        lr = alpha
        new_theta = theta - lr * t.theta_grad
        new_vartheta = vartheta - lr * t.vartheta_grad
        if barrier:
            s = min(t.slacks)
            info.min_slack = min(info.min_slack, s)
            info.slack_violations += s <= 0
            # backtracking: strict feasibility plus Armijo sufficient decrease
            slope = float(t.theta_grad @ t.theta_grad) + t.vartheta_grad * t.vartheta_grad
            for _ in range(MAX_BACKTRACKS):
                f_new = _value(new_theta, new_vartheta, x, r, prev, scale, tail, cfg, mu)
                if f_new <= t.value - ARMIJO_C * lr * slope:
                    break
                info.backtracks += 1
                lr *= 0.5
                new_theta = theta - lr * t.theta_grad
                new_vartheta = vartheta - lr * t.vartheta_grad
            else:
                info.rejected_steps += 1
                new_theta, new_vartheta = theta, vartheta
        if not (np.all(np.isfinite(new_theta)) and math.isfinite(new_vartheta)):
            raise NumericError(f"non-finite parameters at inner iteration {i}"
                               + (f" of step {step}" if step is not None else ""), iteration=i)
        theta, vartheta = new_theta, new_vartheta
    pi, _ = activate(float(theta @ x), act, lo, gain)
    gap = abs(pi - prev)
    if vartheta < gap + FEASIBILITY_EPS:
        vartheta = gap + FEASIBILITY_EPS
    if barrier:
        s = min(pi - prev + vartheta, prev - pi + vartheta)
        info.min_slack = min(info.min_slack, s)
        info.slack_violations += s <= 0
    return theta, vartheta


def inner_optimize(state: LearnerState, config: LearnerConfig, x, r: float,
                   info: InnerInfo | None = None) -> LearnerState:
    """Run ``inner_iters`` subgradient steps; returns a new state.

    ``info`` (optional) collects the (VaR, CVaR) estimate at every iterate
    and barrier slack statistics.
    """
    x = np.asarray(x, dtype=float)
    info = info if info is not None else InnerInfo()
    theta, vartheta = _inner_loop(state.theta.copy(), state.vartheta, x, r, state.prev_position,
                                  state.reward_scale, _tail_for(state, config), config, info,
                                  step=state.step)
    params = dataclasses.replace(state.params, theta=theta)
    return dataclasses.replace(state, params=params, vartheta=vartheta)


def run_online(prices: PriceSeries, config: LearnerConfig,
               on_step: Callable[[int, float], None] | None = None) -> BacktestReport:
    """Single online pass over ``prices``.

    At price index ``t`` the learner has seen ``p_0..p_t`` only. It realizes
    the reward of the previous position, learns from it, then senses
    ``x_t`` and emits ``pi_t`` (reported through ``on_step(t, pi_t)``).
    Trading starts once ``lags_n + 1`` filtered returns exist.

    Raises:
        InsufficientDataError: fewer than ``lags_n + 3`` prices.
        NumericError: divergence; ``.step`` holds the price index.
    """
    P = prices.prices
    T = len(P)
    n = config.lags_n
    if T < n + 3:
        raise InsufficientDataError(f"need more than {n + 2} prices, got {T}")
    cfg = config
    state = init_state(cfg)
    theta = state.theta.copy()
    vartheta = state.vartheta
    window = state.window
    act, lo, gain = cfg.activation, cfg.long_only, cfg.gain
    rf = cfg.riskless_rate if cfg.allocation else 0.0

    ema = EmaFilter(cfg.filter_span)
    vol_w = ema_weight(cfg.vol_span)
    var_r = None
    lags: deque[float] = deque(maxlen=n + 1)

    positions = np.zeros(T)
    varthetas = np.zeros(T)
    rewards_aux = np.zeros(T)
    rewards_real = np.zeros(T)
    costs = np.zeros(T)
    risk_trace: list[tuple[int, RiskEstimate]] = []
    audit: list[tuple] = []
    info = InnerInfo()
    info.estimates = _NullList()

    pos_prev = 0.0  # pi_{t-1} relative to the pending action
    pending = None  # (x, position, vartheta, scale, pre_image)
    p_last = float(P[0])
    for t in range(T):
        p = float(P[t]) if t else p_last
        if t:
            r = p / p_last - 1.0
            p_last = p
            if pending is not None:
                x, pos, vth, scale, g = pending
                trade = abs(pos - pos_prev)
                real = pos * (r - rf) + rf - cfg.delta * trade
                aux = pos * (r - rf) + rf - cfg.delta * vth
                rewards_real[t] = real
                rewards_aux[t] = aux
                costs[t] = cfg.delta * trade
                audit.append((None, g, r))
                window.push(aux * scale)
                tail = TailEvaluator(window.rewards[:-1], cfg.gamma)
                var, cvar, _ = tail.evaluate(-aux * scale)
                risk_trace.append((t, RiskEstimate(var, cvar, cfg.gamma, len(window))))
                try:
                    theta, vartheta = _inner_loop(theta, vth, x, r, pos_prev, scale, tail, cfg, info, step=t)
                except NumericError as exc:
                    exc.step = t
                    raise
                pos_prev = pos
            y = ema.update(r)
            var_r = r * r if var_r is None else var_r + vol_w * (r * r - var_r)
            lags.appendleft(y)
        if len(lags) == n + 1:
            if cfg.standardize:
                scale = 1.0 / max(math.sqrt(var_r), MIN_VOL)
            else:
                scale = 1.0
            x = np.empty(n + 2)
            x[: n + 1] = lags
            if cfg.standardize:
                x[: n + 1] *= scale
            x[-1] = 1.0
            g = float(theta @ x)
            pos, _ = activate(g, act, lo, gain)
            if not math.isfinite(pos):
                raise NumericError(f"non-finite position at step {t}", step=t)
            vartheta = _restore(vartheta, pos, pos_prev)
            positions[t] = pos
            varthetas[t] = vartheta
            pending = (x, pos, vartheta, scale, g)
            if on_step is not None:
                on_step(t, pos)

    diagnostics = {
        "convexity_fraction": audit_run(audit, cfg.activation, cfg.allocation, cfg.riskless_rate, cfg.gain)
        if audit else None,
        "learning_steps": len(risk_trace),
        "barrier_active": cfg.barrier_active,
        "min_barrier_slack": info.min_slack if math.isfinite(info.min_slack) else None,
        "barrier_slack_violations": info.slack_violations,
        "backtracks": info.backtracks,
        "rejected_steps": info.rejected_steps,
        "final_theta": [float(v) for v in theta],
        "final_vartheta": float(vartheta),
    }
    return summarize(
        prices,
        positions,
        rewards_aux,
        rewards_real,
        varthetas=varthetas,
        costs=costs,
        risk_trace=risk_trace,
        config_echo=cfg.to_dict(),
        diagnostics=diagnostics,
        w0=cfg.w0,
    )


class _NullList(list):
    """Discards appends; keeps long runs from storing per-iterate estimates."""

    def append(self, item):
        pass
