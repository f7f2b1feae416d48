"""Seeded synthetic price generators for desk-scale experiments.

All models produce log-returns ``log(p_t / p_{t-1})`` on a uniform step grid
starting from ``p_0 = 100``; per-step volatilities are of the order of an
intraday bar. Parameters per model:

random-walk
    ``vol``: i.i.d. Gaussian log-returns with zero drift.
trend
    A latent drift that flips sign with probability ``switch_prob`` per step
    (mean run length ``1/switch_prob``), magnitude ``drift``, plus Gaussian
    noise ``vol``. Returns are positively autocorrelated through the
    persistent drift.
meanrevert
    AR(1) returns with coefficient ``phi < 0`` and innovation ``vol``.
regime-switch
    Three-state Markov chain (bull, bear, calm) with per-state drift and
    volatility; each step stays in its state with probability ``stay_prob``.
    Bear regimes are more volatile than bull ones.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError
from .market_data import PriceSeries

MODELS = ("trend", "meanrevert", "regime-switch", "random-walk")


@dataclass(frozen=True)
class RandomWalk:
    vol: float = 0.002

    def log_returns(self, steps: int, rng: np.random.Generator) -> np.ndarray:
        return self.vol * rng.standard_normal(steps)


@dataclass(frozen=True)
class Trend:
    drift: float = 0.0008
    vol: float = 0.002
    switch_prob: float = 0.004

    def log_returns(self, steps: int, rng: np.random.Generator) -> np.ndarray:
        flips = rng.random(steps) < self.switch_prob
        sign = np.where(rng.random() < 0.5, -1.0, 1.0) * np.cumprod(np.where(flips, -1.0, 1.0))
        return self.drift * sign + self.vol * rng.standard_normal(steps)


@dataclass(frozen=True)
class MeanRevert:
    phi: float = -0.3
    vol: float = 0.002

    def log_returns(self, steps: int, rng: np.random.Generator) -> np.ndarray:
        eps = self.vol * rng.standard_normal(steps)
        out = np.empty(steps)
        prev = 0.0
        for i in range(steps):
            prev = self.phi * prev + eps[i]
            out[i] = prev
        return out


@dataclass(frozen=True)
class RegimeSwitch:
    drifts: tuple = (0.0006, -0.0008, 0.0)
    vols: tuple = (0.0015, 0.004, 0.002)
    stay_prob: float = 0.995

    def regimes(self, steps: int, rng: np.random.Generator) -> np.ndarray:
        k = len(self.drifts)
        states = np.empty(steps, dtype=int)
        s = int(rng.integers(k))
        u = rng.random(steps)
        jumps = rng.integers(1, k, size=steps)
        for i in range(steps):
            if u[i] >= self.stay_prob:
                s = (s + int(jumps[i])) % k
            states[i] = s
        return states

    def log_returns(self, steps: int, rng: np.random.Generator) -> np.ndarray:
        states = self.regimes(steps, rng)
        mu = np.asarray(self.drifts)[states]
        sd = np.asarray(self.vols)[states]
        return mu + sd * rng.standard_normal(steps)


_REGISTRY = {
    "random-walk": RandomWalk,
    "trend": Trend,
    "meanrevert": MeanRevert,
    "regime-switch": RegimeSwitch,
}


def make_model(name: str, **params):
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ParameterError(f"unknown generator {name!r}; expected one of {MODELS}") from None
    return cls(**params)


def generate(model: str, steps: int, seed: int, start_price: float = 100.0, **params) -> PriceSeries:
    """``steps`` prices with integer timestamps ``0..steps-1``."""
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    gen = make_model(model, **params)
    rng = np.random.default_rng(seed)
    lr = gen.log_returns(steps - 1, rng)
    log_p = np.log(start_price) + np.concatenate([[0.0], np.cumsum(lr)])
    return PriceSeries(tuple(range(steps)), np.exp(log_p))


def model_params(model: str, **params) -> dict:
    return {"model": model, **asdict(make_model(model, **params))}
