import math

import numpy as np
import pytest

from lcanav.dynamics import InputBounds, make_state, rk4_step, unicycle_deriv
from lcanav.environment import Circle, Composite, Obstacle, Rectangle, ho_cbf
from lcanav.navigator import terminal_input
from lcanav.safety import (MAX_CONSTRAINTS, FilterParams, TangentMemory, barrier_constraint,
                           cbf_filter, manifold_constraint, mcbf_filter, single_integrator_filter,
                           tangent_direction)

P = FilterParams()


def test_params_validation():
    with pytest.raises(ValueError):
        FilterParams(gamma=0.0)
    with pytest.raises(ValueError):
        FilterParams(alpha_gain=-1.0)
    with pytest.raises(ValueError):
        FilterParams(d_act=0.0)


def test_barrier_row_is_hbar_rate(rng):
    # a . u + coeff . v_obs must equal d/dt hbar along the flow
    for _ in range(200):
        obs = Obstacle(Circle((0.0, 0.0), 0.8), 0)
        while True:
            s = np.array([*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi)])
            if obs.shape.evaluate(s[:2]).h > 0.2:
                break
        u = np.array([rng.uniform(0, 1), rng.uniform(-2, 2)])
        vo = rng.normal(size=2)
        row = barrier_constraint(s, obs, vo, P)
        eps = 1e-6
        ds = unicycle_deriv(s, u)
        moved = Obstacle(obs.shape.translated(vo * eps), 0)
        back = Obstacle(obs.shape.translated(-vo * eps), 0)
        rate = (ho_cbf(s + eps * ds, moved, P.w_h).hbar - ho_cbf(s - eps * ds, back, P.w_h).hbar) / (2 * eps)
        hbar = ho_cbf(s, obs, P.w_h).hbar
        # row: a.u >= -alpha hbar - coeff.vo  <=>  rate >= -alpha hbar
        assert row.a @ u - row.b == pytest.approx(rate + P.alpha_gain * hbar, abs=1e-5)


def test_filter_passes_nominal_when_safe():
    world = [Obstacle(Circle((5.0, 0.0), 0.5), 0)]
    s = make_state(0, 0, 0)
    u_nom = np.array([0.5, 0.1])
    u, d = mcbf_filter(s, u_nom, world, {}, P, TangentMemory(), (8.0, 0.0))
    assert d.status == "none" and np.array_equal(u, u_nom)
    world = [Obstacle(Circle((2.0, 1.5), 0.5), 0)]  # visible, inactive
    u, d = cbf_filter(s, u_nom, world, {}, P)
    assert d.status == "optimal" and d.u_qp is not None and np.array_equal(d.u_qp, u_nom)
    assert d.active_set == [] and not d.clamped


def test_filter_blocks_head_on_approach():
    world = [Obstacle(Circle((0.6, 0.0), 0.3), 0)]
    s = make_state(0, 0, 0)
    u, d = cbf_filter(s, np.array([1.0, 0.0]), world, {}, P)
    row = barrier_constraint(s, world[0], np.zeros(2), P)
    assert row.a @ d.u_qp >= row.b - 1e-9
    assert d.active_set == [0] and u[0] < 1.0


def test_tangent_direction_sign_and_hysteresis():
    obs = Obstacle(Circle((0.0, 0.0), 1.0), 3)
    s = make_state(-1.5, 0.0, 0.0)
    t = tangent_direction(s, obs, (2.0, 1.0), P)
    assert np.allclose(t, [0.0, 1.0])  # toward the reference side
    t = tangent_direction(s, obs, (2.0, -1.0), P)
    assert np.allclose(t, [0.0, -1.0])
    mem = TangentMemory()
    tangent_direction(s, obs, (2.0, 1.0), P, mem)
    # reference nearly on the normal line: remembered sign kept
    t = tangent_direction(s, obs, (2.0, -0.01), P, mem)
    assert np.allclose(t, [0.0, 1.0]) and len(mem) == 1
    # sticky keeps it even when the reference is clearly on the other side
    t = tangent_direction(s, obs, (2.0, -1.0), P, mem, sticky=True)
    assert np.allclose(t, [0.0, 1.0])
    assert tangent_direction(make_state(-3.0, 0, 0), obs, (2, 1), P) is None


def test_manifold_row():
    c = manifold_constraint(make_state(0, 0, math.pi / 2), np.array([0.0, 1.0]), 0.2)
    assert np.allclose(c.a, [1.0, 0.0]) and c.b == 0.2
    c = manifold_constraint(make_state(0, 0, 0.0), np.array([0.0, 1.0]), 0.2, w_h=0.3)
    assert np.allclose(c.a, [0.0, 0.3])  # facing across the tangent: turn to comply


def test_constraint_cap_and_composite_split():
    world = [Obstacle(Circle((math.cos(a) * 2, math.sin(a) * 2), 0.2), k)
             for k, a in enumerate(np.linspace(0, 2 * math.pi, 20, endpoint=False))]
    _, d = cbf_filter(make_state(0, 0, 0), np.array([0.5, 0.0]), world, {}, P)
    assert d.n_constraints == MAX_CONSTRAINTS
    comp = Obstacle(Composite((Rectangle((1, -1), (1.2, 1)), Rectangle((-1, 1), (1.2, 1.2)))), 0)
    _, d = cbf_filter(make_state(0, 0, 0), np.array([0.5, 0.0]), [comp], {}, P)
    assert d.n_constraints == 2


def test_slack_relaxation_when_barriers_conflict():
    # robot already inside two overlapping discs, one ahead and one behind:
    # the rows read -v >= 0.4 and v >= -0.2
    world = [Obstacle(Circle((0.5, 0.0), 0.6), 0), Obstacle(Circle((-0.5, 0.0), 0.6), 1)]
    u, d = cbf_filter(make_state(0, 0, 0), np.array([0.5, 0.0]), world, {}, P)
    assert d.status == "relaxed_slack" and d.failed and d.slack > 0
    assert InputBounds().contains(u)


def test_bounds_applied_after_qp():
    world = [Obstacle(Circle((0.5, 0.0), 0.3), 0)]
    u, d = cbf_filter(make_state(0, 0, 0), np.array([5.0, 5.0]), world, {}, P)
    assert InputBounds().contains(u) and d.clamped


def _saddle_episode(controller, seconds=25.0):
    """Robot behind a disc, goal straight behind it; nominal steers at the goal."""
    obs = [Obstacle(Circle((0.0, 0.0), 0.8), 0)]
    goal = np.array([3.0, 0.0])
    s = make_state(-2.5, 0.0, 0.0)
    mem = TangentMemory()
    dt = 0.01
    min_h = math.inf
    for _ in range(int(seconds / dt)):
        u_nom = np.minimum(terminal_input(goal, s, 0.5, 1.5), [1.0, 2.0])
        if controller == "mcbf":
            u, _ = mcbf_filter(s, u_nom, obs, {}, P, mem, goal)
        else:
            u, _ = cbf_filter(s, u_nom, obs, {}, P)
        s = rk4_step(s, u, dt)
        min_h = min(min_h, obs[0].shape.evaluate(s[:2]).h)
        if math.hypot(*(s[:2] - goal)) < 0.3:
            break
    return s, min_h


def test_cbf_stalls_at_saddle_mcbf_escapes():
    s, min_h = _saddle_episode("cbf")
    assert min_h > 0 and s[0] < -0.5  # stuck in front of the disc
    s, min_h = _saddle_episode("mcbf")
    assert min_h > 0 and math.hypot(s[0] - 3.0, s[1]) < 0.3


def test_single_integrator_invariance_short(rng):
    obs = [Obstacle(Circle((0.0, 0.0), 1.0), 0), Obstacle(Rectangle((1.5, -2.0), (2.5, -0.5)), 1)]
    for _ in range(10):
        while True:
            p = rng.uniform(-3, 3, 2)
            if min(o.shape.evaluate(p).h for o in obs) > 0.05:
                break
        for _ in range(500):
            hs = [o.shape.evaluate(p).h for o in obs]
            c = np.asarray(obs[int(np.argmin(hs))].reference_point())
            u, sol = single_integrator_filter(p, 2.0 * (c - p) / np.linalg.norm(c - p), obs)
            assert sol.optimal
            p = p + 0.02 * u
            assert min(o.shape.evaluate(p).h for o in obs) > 0
