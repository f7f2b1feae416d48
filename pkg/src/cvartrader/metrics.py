"""Performance accounting for backtests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConsistencyError, DomainError, InsufficientDataError
from .risk import RiskEstimate

SCHEMA_VERSION = 1


def max_drawdown(equity: Sequence[float]) -> float:
    """Largest fractional decline from a running peak of wealth."""
    e = np.asarray(equity, dtype=float)
    if e.size == 0:
        raise InsufficientDataError("empty equity series")
    if np.any(~(e > 0)):
        raise DomainError("wealth must be strictly positive for drawdown")
    peaks = np.maximum.accumulate(e)
    return float(np.max((peaks - e) / peaks))


def downside_variance(rewards: Sequence[float]) -> float:
    """Population variance of the strictly negative rewards (0 if fewer than 2)."""
    r = np.asarray(rewards, dtype=float)
    neg = r[r < 0]
    if neg.size < 2:
        return 0.0
    return float(np.var(neg))


def buy_and_hold(prices: Sequence[float], w0: float = 1.0) -> np.ndarray:
    p = np.asarray(getattr(prices, "prices", prices), dtype=float)
    if p.size == 0:
        raise InsufficientDataError("empty price series")
    return w0 * p / p[0]


def compound(rewards: Sequence[float], w0: float = 1.0) -> np.ndarray:
    """Wealth path with ``equity[0] = w0`` and ``equity[t] = equity[t-1] * (1 + R[t])``."""
    r = np.asarray(rewards, dtype=float)
    if r.size and r[0] != 0.0:
        raise ConsistencyError("reward at step 0 must be 0 (no position held before the first step)")
    return w0 * np.cumprod(1.0 + r)


@dataclass
class BacktestReport:
    timestamps: tuple
    prices: np.ndarray
    equity: np.ndarray
    equity_additive: np.ndarray
    positions: np.ndarray
    varthetas: np.ndarray
    rewards_aux: np.ndarray
    rewards_realized: np.ndarray
    costs: np.ndarray
    baseline_equity: np.ndarray
    total_return: float
    total_return_additive: float
    mdd: float
    downside_variance: float
    baseline_total_return: float
    baseline_mdd: float
    config_echo: dict
    risk_trace: list = field(default_factory=list)  # (step, RiskEstimate)
    diagnostics: dict = field(default_factory=dict)
    w0: float = 1.0

    @property
    def terminal_wealth(self) -> float:
        return float(self.equity[-1])

    def metrics_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_steps": int(len(self.equity)),
            "w0": self.w0,
            "terminal_wealth": self.terminal_wealth,
            "total_return": self.total_return,
            "total_return_additive": self.total_return_additive,
            "mdd": self.mdd,
            "downside_variance": self.downside_variance,
            "total_cost": float(np.sum(self.costs)),
            "turnover": float(np.sum(np.abs(np.diff(self.positions, prepend=0.0)))),
            "baseline_total_return": self.baseline_total_return,
            "baseline_mdd": self.baseline_mdd,
            "config_echo": self.config_echo,
            "diagnostics": self.diagnostics,
        }


def summarize(
    prices: Sequence[float],
    positions: Sequence[float],
    rewards_aux: Sequence[float],
    rewards_realized: Sequence[float],
    *,
    timestamps: Sequence | None = None,
    varthetas: Sequence[float] | None = None,
    costs: Sequence[float] | None = None,
    risk_trace: list[tuple[int, RiskEstimate]] | None = None,
    config_echo: dict | None = None,
    diagnostics: dict | None = None,
    w0: float = 1.0,
) -> BacktestReport:
    """Assemble a :class:`BacktestReport` from per-step series of equal length."""
    p = np.asarray(getattr(prices, "prices", prices), dtype=float)
    T = len(p)
    if timestamps is None:
        timestamps = getattr(prices, "timestamps", tuple(range(T)))
    series = {
        "positions": np.asarray(positions, dtype=float),
        "rewards_aux": np.asarray(rewards_aux, dtype=float),
        "rewards_realized": np.asarray(rewards_realized, dtype=float),
        "varthetas": np.zeros(T) if varthetas is None else np.asarray(varthetas, dtype=float),
        "costs": np.zeros(T) if costs is None else np.asarray(costs, dtype=float),
    }
    for name, arr in series.items():
        if arr.shape != (T,):
            raise ConsistencyError(f"{name} has length {arr.shape}, expected {T}")
    if len(timestamps) != T:
        raise ConsistencyError(f"{len(timestamps)} timestamps for {T} prices")

    realized = series["rewards_realized"]
    equity = compound(realized, w0)
    equity_add = w0 * (1.0 + np.cumsum(realized))
    baseline = buy_and_hold(p, w0)
    return BacktestReport(
        timestamps=tuple(timestamps),
        prices=p,
        equity=equity,
        equity_additive=equity_add,
        baseline_equity=baseline,
        total_return=float(equity[-1] / w0 - 1.0),
        total_return_additive=float(equity_add[-1] / w0 - 1.0),
        mdd=max_drawdown(equity),
        downside_variance=downside_variance(realized),
        baseline_total_return=float(baseline[-1] / w0 - 1.0),
        baseline_mdd=max_drawdown(baseline),
        config_echo=dict(config_echo or {}),
        risk_trace=list(risk_trace or []),
        diagnostics=dict(diagnostics or {}),
        w0=w0,
        **series,
    )
