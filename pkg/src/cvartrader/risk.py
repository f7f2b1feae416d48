"""Order-statistic VaR and CVaR estimation over a sliding window of rewards.

Losses are negated rewards. With ``m`` samples and level ``gamma`` the VaR
estimate is the ``k``-th smallest loss with ``k = max(1, ceil(m * gamma))``
and the CVaR estimate is

    cvar = var + sum_j max(loss_j - var, 0) / (m * (1 - gamma))

The clamp on ``k`` makes ``gamma = 0`` well defined; there the estimate
telescopes to the plain mean loss.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InsufficientDataError, ParameterError


@dataclass(frozen=True)
class RiskEstimate:
    var: float
    cvar: float
    gamma: float
    sample_count: int


class RewardWindow:
    """Bounded FIFO of the most recent rewards, oldest evicted first."""

    def __init__(self, capacity: int, rewards: Iterable[float] = ()):
        if capacity < 1:
            raise ParameterError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._buf: deque[float] = deque(maxlen=self.capacity)
        for r in rewards:
            self.push(r)

    def push(self, reward: float) -> None:
        self._buf.append(float(reward))

    @property
    def newest(self) -> float:
        if not self._buf:
            raise InsufficientDataError("empty reward window")
        return self._buf[-1]

    @property
    def rewards(self) -> list[float]:
        return list(self._buf)

    def __len__(self) -> int:
        return len(self._buf)

    def __iter__(self):
        return iter(self._buf)

    def __repr__(self) -> str:
        return f"RewardWindow(capacity={self.capacity}, rewards={list(self._buf)!r})"


WindowLike = Union[RewardWindow, Sequence[float], np.ndarray]


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma < 1.0:
        raise ParameterError(f"gamma must lie in [0, 1), got {gamma}")
    return gamma


def order_index(m: int, gamma: float) -> int:
    """1-based order-statistic index ``max(1, ceil(m * gamma))``.

    ``m * gamma`` is rounded to 9 decimals first so that, e.g., ``10 * 0.3``
    maps to 3 rather than 4.
    """
    return max(1, math.ceil(round(m * gamma, 9)))


def _losses(window: WindowLike) -> list[float]:
    losses = [-float(r) for r in window]
    if not losses:
        raise InsufficientDataError("cannot estimate risk on an empty window")
    return losses


def estimate_var(window: WindowLike, gamma: float) -> float:
    gamma = check_gamma(gamma)
    losses = sorted(_losses(window))
    return losses[order_index(len(losses), gamma) - 1]


def estimate_cvar(window: WindowLike, gamma: float) -> RiskEstimate:
    gamma = check_gamma(gamma)
    losses = _losses(window)
    m = len(losses)
    ordered = sorted(losses)
    var = ordered[order_index(m, gamma) - 1]
    if gamma == 0.0:
        # var is the minimum, so the excess sum telescopes to the mean loss
        cvar = math.fsum(losses) / m
    else:
        excess = math.fsum(l - var for l in ordered if l > var)
        cvar = var + excess / (m * (1.0 - gamma))
    return RiskEstimate(var=var, cvar=cvar, gamma=gamma, sample_count=m)


def cvar_subgradient_flag(window: WindowLike, gamma: float) -> int:
    """1 when the newest loss lies strictly beyond the VaR estimate."""
    rewards = list(window)
    var = estimate_var(rewards, gamma)
    return int(-rewards[-1] > var)


class TailEvaluator:
    """CVaR of a window whose newest reward varies while the others stay fixed.

    The fixed losses are sorted once, after which each evaluation for a
    candidate newest loss costs O(log m). Results agree with
    :func:`estimate_cvar` on the same samples.
    """

    def __init__(self, fixed_rewards: Sequence[float], gamma: float):
        self.gamma = check_gamma(gamma)
        self.sorted_losses = sorted(-float(r) for r in fixed_rewards)
        self.m = len(self.sorted_losses) + 1
        self.k = order_index(self.m, self.gamma)
        self.scale = 1.0 / (self.m * (1.0 - self.gamma))
        # suffix[i] = sum of sorted_losses[i:]
        suffix = [0.0] * (len(self.sorted_losses) + 1)
        acc = 0.0
        for i in range(len(self.sorted_losses) - 1, -1, -1):
            acc += self.sorted_losses[i]
            suffix[i] = acc
        self.suffix = suffix

    def evaluate(self, newest_loss: float) -> tuple[float, float, float]:
        """Return ``(var, cvar, d cvar / d newest_loss)``.

        The derivative is the right derivative: among ties the newest sample
        ranks last, matching a stable sort of the window in arrival order.
        """
        P = self.sorted_losses
        k = self.k
        pos = bisect_right(P, newest_loss)  # newest sits at 0-based index pos
        if k - 1 < pos:
            var = P[k - 1]
        elif k - 1 == pos:
            var = newest_loss
        else:
            var = P[k - 2]
        above = bisect_right(P, var)
        count = len(P) - above
        excess = self.suffix[above] - count * var
        if newest_loss > var:
            excess += newest_loss - var
        cvar = var + excess * self.scale
        if pos + 1 > k:
            slope = self.scale
        elif pos + 1 == k:
            slope = 1.0 - count * self.scale
        else:
            slope = 0.0
        return var, cvar, slope
