"""Single-unit trading policy, reward models and their derivatives.

The position is ``pi = f(theta @ x)`` for an activation ``f``:

* ``linear``: unit-slope (times ``gain``) line clipped to the position range.
  Piecewise linear, so ``f'' = 0`` almost everywhere and the reward is
  concave in ``theta`` for any sign of the asset return.
* ``tanh``: smooth, bounded in (-1, 1); concave only for ``g > 0``.
* ``sigmoid``: long-only counterpart of ``tanh`` with range (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, NumericError, ParameterError, ShapeError

ACTIVATIONS = ("linear", "tanh", "sigmoid")


def check_activation(name: str, long_only: bool = False) -> str:
    if name not in ACTIVATIONS:
        raise ParameterError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")
    if long_only and name == "tanh":
        raise ParameterError("tanh ranges over (-1, 1); use sigmoid or linear for long-only")
    return name


def position_bounds(activation: str, long_only: bool = False) -> tuple[float, float]:
    if long_only or activation == "sigmoid":
        return 0.0, 1.0
    return -1.0, 1.0


def activate(g: float, activation: str = "linear", long_only: bool = False, gain: float = 1.0) -> tuple[float, float]:
    """Return ``(f(g), f'(g))``.

    For the clipped line the slope is 0 once ``|gain * g|`` reaches the
    clip level. The long-only lower kink at 0 takes the right derivative so
    a zero-initialised policy can still leave the flat position.
    """
    z = gain * g
    if activation == "linear":
        if long_only:
            if z >= 1.0:
                return 1.0, 0.0
            if z < 0.0:
                return 0.0, 0.0
            return z, gain
        if z >= 1.0:
            return 1.0, 0.0
        if z <= -1.0:
            return -1.0, 0.0
        return z, gain
    if activation == "tanh":
        t = math.tanh(z)
        return t, gain * (1.0 - t * t)
    if activation == "sigmoid":
        s = 0.5 * (1.0 + math.tanh(0.5 * z))
        return s, gain * s * (1.0 - s)
    raise ParameterError(f"unknown activation {activation!r}")


def curvature(g: float, activation: str = "linear", gain: float = 1.0) -> float:
    """Second derivative ``f''(g)``; identically 0 for the clipped line."""
    z = gain * g
    if activation == "linear":
        return 0.0
    if activation == "tanh":
        t = math.tanh(z)
        return -2.0 * gain * gain * t * (1.0 - t * t)
    if activation == "sigmoid":
        s = 0.5 * (1.0 + math.tanh(0.5 * z))
        return gain * gain * s * (1.0 - s) * (1.0 - 2.0 * s)
    raise ParameterError(f"unknown activation {activation!r}")


@dataclass
class PolicyParams:
    theta: np.ndarray
    activation: str = "linear"
    long_only: bool = False
    gain: float = 1.0

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        if self.theta.ndim != 1 or self.theta.size == 0:
            raise ShapeError("theta must be a non-empty vector")
        if not np.all(np.isfinite(self.theta)):
            raise NumericError("theta has non-finite entries")
        check_activation(self.activation, self.long_only)

    @classmethod
    def zeros(cls, dim: int, **kwargs) -> "PolicyParams":
        return cls(np.zeros(dim), **kwargs)


def _pre_image(params: PolicyParams, state: Sequence[float]) -> tuple[float, np.ndarray]:
    x = np.asarray(state, dtype=float)
    if x.shape != params.theta.shape:
        raise ShapeError(f"state has shape {x.shape}, theta has {params.theta.shape}")
    return float(params.theta @ x), x


def evaluate_policy(params: PolicyParams, state: Sequence[float]) -> float:
    g, _ = _pre_image(params, state)
    pos, _ = activate(g, params.activation, params.long_only, params.gain)
    if not math.isfinite(pos):
        raise NumericError(f"non-finite position from pre-image {g!r}")
    return pos


def reward_frictionless(position: float, asset_return: float) -> float:
    return position * asset_return


def reward_with_cost(position: float, prev_position: float, asset_return: float, delta: float) -> float:
    """Return net of a linear charge ``delta`` per unit of position change."""
    if delta < 0:
        raise ParameterError(f"cost rate must be non-negative, got {delta}")
    return position * asset_return - delta * abs(position - prev_position)


def reward_with_aux(position: float, vartheta: float, asset_return: float, delta: float) -> float:
    """Return net of ``delta * vartheta``, where ``vartheta`` bounds the trade size."""
    if vartheta < 0:
        raise ParameterError(f"auxiliary cost variable must be non-negative, got {vartheta}")
    if delta < 0:
        raise ParameterError(f"cost rate must be non-negative, got {delta}")
    return position * asset_return - delta * vartheta


def reward_allocation(position: float, risky_return: float, riskless_return: float) -> float:
    """Long-only split of capital between a risky and a riskless asset."""
    if not 0.0 <= position <= 1.0:
        raise DomainError(f"long-only allocation needs position in [0, 1], got {position}")
    return position * risky_return + (1.0 - position) * riskless_return


def policy_gradient(params: PolicyParams, state: Sequence[float], asset_return: float) -> np.ndarray:
    """Gradient of ``f(theta @ x) * r`` with respect to ``theta``."""
    g, x = _pre_image(params, state)
    _, slope = activate(g, params.activation, params.long_only, params.gain)
    return asset_return * slope * x
