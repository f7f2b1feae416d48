"""Curvature diagnostics for the single-unit reward.

For ``R(theta) = f(theta @ x) * r`` the Hessian is ``f''(g) * r * X`` with
``X = x x^T``. ``X`` has rank one: ``kappa`` zero eigenvalues and one equal
to ``x @ x = 1 + sum(features**2)``, so ``X`` is PSD and the reward is
concave in ``theta`` exactly when ``f''(g) * r <= 0``. In allocation mode
``r`` is replaced by the excess return ``r - r_f``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError, ShapeError
from .policy import check_activation, curvature


def _check_state(state: Sequence[float]) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.ndim != 1 or x.size == 0 or x[-1] != 1.0:
        raise ShapeError("state must be a vector whose last (bias) coordinate is 1")
    return x


def state_outer_matrix(state: Sequence[float]) -> np.ndarray:
    x = _check_state(state)
    return np.outer(x, x)


def closed_form_eigenvalues(state: Sequence[float]) -> np.ndarray:
    """Roots of ``lambda**kappa * (lambda - 1 - sum(features**2))``, ascending."""
    x = _check_state(state)
    kappa = x.size - 1
    top = 1.0 + float(np.sum(x[:-1] ** 2))
    return np.array([0.0] * kappa + [top])


def state_matrix_eigenvalues(state: Sequence[float]) -> np.ndarray:
    """Eigenvalues of ``x x^T`` from a symmetric eigensolver, ascending."""
    return np.linalg.eigvalsh(state_outer_matrix(state))


def reward_hessian(theta, state, asset_return: float, activation: str = "tanh",
                   gain: float = 1.0, riskless_return: float = 0.0) -> np.ndarray:
    x = _check_state(state)
    g = float(np.asarray(theta, dtype=float) @ x)
    return curvature(g, activation, gain) * (asset_return - riskless_return) * np.outer(x, x)


@dataclass(frozen=True)
class ConvexityVerdict:
    """Which sufficient condition holds at one step.

    ``nonneg_return_concave``: effective return >= 0 and f locally concave.
    ``nonpos_return_convex``: effective return <= 0 and f locally convex.
    """

    nonneg_return_concave: bool
    nonpos_return_convex: bool

    @property
    def met(self) -> bool:
        return self.nonneg_return_concave or self.nonpos_return_convex

    @property
    def branch(self) -> int | None:
        if self.nonneg_return_concave:
            return 1
        if self.nonpos_return_convex:
            return 2
        return None


def convexity_condition(activation: str, asset_return: float, allocation_mode: bool = False,
                        riskless_return: float = 0.0, pre_image: float = 0.0,
                        gain: float = 1.0) -> ConvexityVerdict:
    check_activation(activation)
    r_eff = asset_return - riskless_return if allocation_mode else asset_return
    fpp = curvature(pre_image, activation, gain)
    return ConvexityVerdict(
        nonneg_return_concave=r_eff >= 0 and fpp <= 0,
        nonpos_return_convex=r_eff <= 0 and fpp >= 0,
    )


@dataclass(frozen=True)
class HessianReport:
    scalar_a: float
    eigenvalues: np.ndarray
    psd_flag: bool
    condition: ConvexityVerdict


def hessian_report(state, theta, asset_return: float, activation: str = "linear",
                   allocation_mode: bool = False, riskless_return: float = 0.0,
                   gain: float = 1.0, tol: float = 1e-12) -> HessianReport:
    x = _check_state(state)
    g = float(np.asarray(theta, dtype=float) @ x)
    r_eff = asset_return - riskless_return if allocation_mode else asset_return
    eig = state_matrix_eigenvalues(x)
    scale = max(1.0, float(eig[-1]))
    return HessianReport(
        scalar_a=curvature(g, activation, gain) * r_eff,
        eigenvalues=eig,
        psd_flag=bool(eig[0] >= -tol * scale),
        condition=convexity_condition(activation, asset_return, allocation_mode,
                                      riskless_return, g, gain),
    )


def audit_run(trace: Iterable[tuple], activation: str, allocation_mode: bool = False,
              riskless_return: float = 0.0, gain: float = 1.0) -> float:
    """Fraction of ``(state, pre_image, asset_return)`` steps meeting a condition."""
    total = met = 0
    for _state, g, r in trace:
        total += 1
        met += convexity_condition(activation, r, allocation_mode, riskless_return, g, gain).met
    if total == 0:
        raise InsufficientDataError("empty audit trace")
    return met / total
