import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cvartrader.convexity import (
    audit_run,
    closed_form_eigenvalues,
    convexity_condition,
    hessian_report,
    reward_hessian,
    state_matrix_eigenvalues,
    state_outer_matrix,
)
from cvartrader.errors import InsufficientDataError, ShapeError
from cvartrader.policy import PolicyParams, evaluate_policy
from oracles import central_hessian


def test_outer_matrix_examples():
    np.testing.assert_array_equal(state_outer_matrix([3, 4, 1]), [[9, 12, 3], [12, 16, 4], [3, 4, 1]])
    np.testing.assert_array_equal(state_outer_matrix([1]), [[1]])
    np.testing.assert_array_equal(state_outer_matrix([0, 1]), [[0, 0], [0, 1]])


def test_malformed_state():
    with pytest.raises(ShapeError):
        state_outer_matrix([1, 2])
    with pytest.raises(ShapeError):
        state_outer_matrix([])


def test_eigenvalue_examples():
    np.testing.assert_allclose(state_matrix_eigenvalues([3, 4, 1]), [0, 0, 26], atol=1e-12)
    np.testing.assert_allclose(state_matrix_eigenvalues([1]), [1])
    np.testing.assert_allclose(state_matrix_eigenvalues([0, 0, 0, 1]), [0, 0, 0, 1], atol=1e-15)
    np.testing.assert_array_equal(closed_form_eigenvalues([3, 4, 1]), [0, 0, 26])


def test_eigenvalues_match_closed_form_on_random_states():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        k = int(rng.integers(0, 12))
        x = np.append(rng.normal(0, 1, k), 1.0)
        np.testing.assert_allclose(state_matrix_eigenvalues(x), closed_form_eigenvalues(x), rtol=0, atol=1e-9)


@given(st.lists(st.floats(-10, 10), max_size=8), st.lists(st.floats(-10, 10), min_size=9, max_size=9))
def test_quadratic_form_nonnegative(feats, v):
    x = feats + [1.0]
    z = np.asarray(v[: len(x)])
    assert z @ state_outer_matrix(x) @ z >= -1e-9


def test_tanh_hessian_structure():
    rng = np.random.default_rng(2)
    for _ in range(200):
        k = int(rng.integers(1, 6))
        x = np.append(rng.normal(0, 1, k), 1.0)
        theta = rng.normal(0, 0.5, k + 1)
        r = rng.normal(0, 0.05)
        numeric = central_hessian(lambda th: evaluate_policy(PolicyParams(th, "tanh"), x) * r, theta)
        np.testing.assert_allclose(numeric, reward_hessian(theta, x, r, "tanh"), rtol=0, atol=1e-6)


def test_condition_examples():
    v = convexity_condition("linear", -0.02)
    assert v.met and v.nonneg_return_concave is False and v.nonpos_return_convex
    assert convexity_condition("tanh", 0.01, pre_image=0.4).branch == 1
    assert convexity_condition("tanh", -0.01, pre_image=-0.4).branch == 2
    assert not convexity_condition("tanh", 0.01, pre_image=-0.4).met
    alloc = convexity_condition("linear", 0.001, allocation_mode=True, riskless_return=0.002)
    assert alloc.met and alloc.branch == 2


def test_condition_allocation_uses_excess_return():
    # raw return positive but excess negative: tanh with g > 0 is concave, so no branch holds
    assert convexity_condition("tanh", 0.001, pre_image=0.5).met
    assert not convexity_condition("tanh", 0.001, True, 0.002, pre_image=0.5).met


def test_hessian_report():
    rep = hessian_report([3, 4, 1], [0.1, 0.0, 0.0], 0.02, "tanh")
    g = 0.3
    fpp = -2 * math.tanh(g) * (1 - math.tanh(g) ** 2)
    assert rep.scalar_a == pytest.approx(fpp * 0.02)
    assert rep.psd_flag
    assert rep.condition.branch == 1
    np.testing.assert_allclose(rep.eigenvalues, [0, 0, 26], atol=1e-12)
    assert hessian_report([3, 4, 1], [0.1, 0, 0], 0.02).scalar_a == 0.0


def test_audit_examples():
    x = [0.2, 1.0]
    steps = [(x, 0.3, 0.01), (x, -0.5, -0.02), (x, 0.1, 0.03), (x, 0.4, -0.01)]
    assert audit_run(steps, "tanh") == 0.75
    assert audit_run(steps, "linear") == 1.0
    assert audit_run(steps[:3], "tanh") == 1.0
    with pytest.raises(InsufficientDataError):
        audit_run([], "linear")


def test_linear_learner_run_audits_fully():
    from cvartrader.learner import LearnerConfig, run_online
    from cvartrader.synth import generate

    rep = run_online(generate("random-walk", 300, 1), LearnerConfig(gamma=0.5))
    assert rep.diagnostics["convexity_fraction"] == 1.0
