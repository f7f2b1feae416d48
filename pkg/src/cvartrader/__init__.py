"""Online CVaR-sensitive trading with a single-unit direct policy."""

from .learner import LearnerConfig, LearnerState, inner_optimize, objective_subgradient, run_online
from .market_data import PriceSeries, compute_returns, filter_returns, load_prices, make_state
from .metrics import BacktestReport, buy_and_hold, downside_variance, max_drawdown, summarize
from .risk import RewardWindow, RiskEstimate, cvar_subgradient_flag, estimate_cvar, estimate_var

__all__ = [
    "BacktestReport",
    "LearnerConfig",
    "LearnerState",
    "PriceSeries",
    "RewardWindow",
    "RiskEstimate",
    "buy_and_hold",
    "compute_returns",
    "cvar_subgradient_flag",
    "downside_variance",
    "estimate_cvar",
    "estimate_var",
    "filter_returns",
    "inner_optimize",
    "load_prices",
    "make_state",
    "max_drawdown",
    "objective_subgradient",
    "run_online",
    "summarize",
]
