import math

import numpy as np
import pytest

from lcanav.dynamics import (InputBounds, linearize, linearize_batch, make_state, rk4_step,
                             rollout, state_error, unicycle_deriv, wrap_angle)


def generic_rk4(s, u, Ts):
    # textbook four-stage RK4 on the vector field, independent of the closed form
    k1 = unicycle_deriv(s, u)
    k2 = unicycle_deriv(s + 0.5 * Ts * k1, u)
    k3 = unicycle_deriv(s + 0.5 * Ts * k2, u)
    k4 = unicycle_deriv(s + Ts * k3, u)
    out = s + Ts / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    out[2] = wrap_angle(out[2])
    return out


def test_wrap_angle_examples():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.0) == 0.0
    a = np.array([-7.0, -math.pi, 0.3, 7.0])
    w = wrap_angle(a)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert np.allclose(np.cos(w), np.cos(a)) and np.allclose(np.sin(w), np.sin(a))


def test_state_error_wraps_heading():
    d = state_error([1.0, 2.0, math.pi - 0.1], [0.0, 0.0, -math.pi + 0.1])
    assert d[:2].tolist() == [1.0, 2.0]
    assert d[2] == pytest.approx(-0.2)


def test_rk4_matches_generic_stages(rng):
    for _ in range(500):
        s = make_state(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi))
        u = np.array([rng.uniform(-1, 1), rng.uniform(-3, 3)])
        Ts = rng.uniform(0.01, 0.8)
        assert np.allclose(rk4_step(s, u, Ts), generic_rk4(s, u, Ts), atol=1e-12)


def test_rk4_straight_and_turn_in_place():
    s = rk4_step(make_state(0, 0, 0), [1.0, 0.0], 0.5)
    assert np.allclose(s, [0.5, 0.0, 0.0])
    s = rk4_step(make_state(1, 2, 0), [0.0, 1.0], 0.5)
    assert np.allclose(s, [1.0, 2.0, 0.5])
    with pytest.raises(ValueError):
        rk4_step(make_state(0, 0, 0), [1, 0], 0.0)


def test_jacobians_match_central_differences(rng):
    eps = 1e-6
    for _ in range(1000):
        s = np.array([*rng.uniform(-3, 3, 2), rng.uniform(-3, 3)])
        u = np.array([rng.uniform(-1, 1), rng.uniform(-2, 2)])
        Ts = rng.uniform(0.05, 0.6)
        J = linearize(s, u, Ts)
        A = np.zeros((3, 3))
        B = np.zeros((3, 2))
        for k in range(3):
            e = np.zeros(3)
            e[k] = eps
            A[:, k] = state_error(rk4_step(s + e, u, Ts), rk4_step(s - e, u, Ts)) / (2 * eps)
        for k in range(2):
            e = np.zeros(2)
            e[k] = eps
            B[:, k] = state_error(rk4_step(s, u + e, Ts), rk4_step(s, u - e, Ts)) / (2 * eps)
        scale = max(1.0, np.max(np.abs(J.A)), np.max(np.abs(J.B)))
        assert np.max(np.abs(J.A - A)) <= 1e-5 * scale
        assert np.max(np.abs(J.B - B)) <= 1e-5 * scale


def test_batch_linearization_matches_single(rng):
    xs = rng.uniform(-2, 2, (20, 3))
    us = rng.uniform(-1, 1, (20, 2))
    A, B = linearize_batch(xs, us, 0.5)
    for k in range(20):
        J = linearize(xs[k], us[k], 0.5)
        assert np.allclose(A[k], J.A) and np.allclose(B[k], J.B)


def test_rollout_is_repeated_rk4():
    us = np.array([[1.0, 0.2]] * 5)
    xs = rollout(make_state(0, 0, 0), us, 0.5)
    assert xs.shape == (6, 3)
    s = make_state(0, 0, 0)
    for u in us:
        s = rk4_step(s, u, 0.5)
    assert np.array_equal(xs[-1], s)


def test_input_bounds():
    b = InputBounds()
    assert b.clamp([2.0, -5.0]).tolist() == [1.0, -2.0]
    assert b.contains([0.5, 1.0]) and not b.contains([-0.1, 0.0])
    with pytest.raises(ValueError):
        InputBounds(v_min=1.0, v_max=0.0)
