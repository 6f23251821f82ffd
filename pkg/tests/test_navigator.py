import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcanav.dynamics import make_state, state_error
from lcanav.navigator import (NavigatorState, NavParams, advance_index, clock_index, control_step,
                              nearest_index, nominal_input, nominal_input_at, reference_at,
                              select_path, terminal_input)
from lcanav.safety import FilterParams
from lcanav.trajopt import PathLibrary


def exhaustive_select(lib, x, tie=1e-9):
    d = {p: min(math.hypot(px - x[0], py - x[1]) for px, py, _ in lib.entries[p].x_star)
         for p in lib.converged_indices()}
    best = min(d.values())
    ties = [p for p in d if d[p] - best <= tie]
    return min(ties, key=lambda p: (abs(p - lib.center_path_index), p))


@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 8), st.floats(-3, 3))
def test_select_path_matches_exhaustive_scan(library, x, y):
    assert select_path(library, np.array([x, y, 0.0])) == exhaustive_select(library, (x, y))


def test_select_path_ties_go_to_center(library):
    e = library.entries[2]
    clone = [type(e)(**{**e.__dict__, "path_index": k}) for k in range(5)]
    lib = PathLibrary(clone, 0.8, 0.5, 16, 2, library.start, library.goal)
    assert select_path(lib, np.array([3.0, 1.0, 0.0])) == 2
    lib = PathLibrary(clone[:2], 0.8, 0.5, 16, 1, library.start, library.goal)
    assert select_path(lib, np.array([3.0, 1.0, 0.0])) == 1


def test_advance_index_monotone(library):
    e = library.entries[2]
    assert advance_index(e, e.x_star[0], 0, 0.3) >= 1  # start point is within tol
    i = advance_index(e, np.array([-5.0, 0.0, 0.0]), 7, 0.3)
    assert i == 7  # never backward
    # floored at nearest - lookback, then past every point within tol
    assert advance_index(e, e.x_star[-1], 0, 0.3) == e.T - 2
    assert advance_index(e, e.x_star[-1], 0, 0.3, lookback=0) == e.T
    i = 0
    for k in range(e.T + 1):
        j = advance_index(e, e.x_star[k], i, 0.3)
        assert j >= i
        i = j


def test_clock_pauses_when_far_and_never_runs_backward(library):
    e = library.entries[2]
    i, ph = clock_index(e, e.x_star[0], 0.0, 0.5, 0.01, 0.3)
    assert ph == pytest.approx(0.01) and i == 0
    i, ph2 = clock_index(e, np.array([0.0, 2.0, 0.0]), ph, 0.5, 0.01, 0.3)
    assert ph2 == ph  # robot far from the reference: clock holds
    phase = 0.0
    rng = np.random.default_rng(0)
    for _ in range(300):
        s = e.x_star[rng.integers(0, e.T + 1)] + rng.normal(0, 0.2, 3)
        _, new = clock_index(e, s, phase, 0.5, 0.01, 0.3)
        assert new >= phase and new <= e.T * 0.5
        phase = new


def test_reference_interpolation(library):
    e = library.entries[1]
    assert np.array_equal(reference_at(e, 0.0, 0.5), e.x_star[0])
    mid = reference_at(e, 0.75, 0.5)
    assert np.allclose(mid, e.x_star[1] + 0.5 * state_error(e.x_star[2], e.x_star[1]))
    assert np.array_equal(reference_at(e, 99.0, 0.5), e.x_star[-1])


def test_nominal_law(library):
    e = library.entries[0]
    assert np.array_equal(nominal_input(e, 3, e.x_star[3]), e.mu_star[3])
    assert np.array_equal(nominal_input_at(e, 1.5, 0.5, e.x_star[3]), e.mu_star[3])
    s = e.x_star[3] + np.array([0.1, -0.05, 0.02])
    assert np.allclose(nominal_input(e, 3, s), e.mu_star[3] + e.K_star[3] @ state_error(e.x_star[3], s))
    assert np.allclose(nominal_input(e, e.T, e.x_star[-1]), 0.0)
    assert nearest_index(e, e.x_star[5]) == 5


def test_terminal_law():
    assert np.allclose(terminal_input((1.0, 0.0), make_state(1.0, 0.0, 0.3), 0.5, 1.5), 0.0)  # at the goal
    u = terminal_input((1.0, 0.0), make_state(0.0, 0.0, math.pi), 0.5, 1.5)
    assert u[0] == 0.0 and abs(u[1]) == pytest.approx(1.5 * math.pi)
    u = terminal_input((1.0, 0.0), make_state(0.0, 0.0, 0.0), 0.5, 1.5)
    assert np.allclose(u, [0.5, 0.0])


def test_control_step_first_tick_and_hold(library):
    nav = NavigatorState()
    s = make_state(0, 0, 0)
    u, nav, d = control_step(s, library, [], {}, nav)
    assert nav.q == 2 and d.status == "none"
    assert np.array_equal(u, FilterParams().bounds.clamp(d.u_nom))
    u, nav, d = control_step(library.goal.copy(), library, [], {}, nav)
    assert d.status == "hold" and np.array_equal(u, [0.0, 0.0]) and nav.goal_reached


def test_control_step_switches_path(library):
    nav = NavigatorState()
    control_step(make_state(0, 0, 0), library, [], {}, nav)
    s = library.entries[0].x_star[6].copy()
    _, nav, d = control_step(s, library, [], {}, nav, nav_params=NavParams())
    assert nav.q == 0 and d.switched
    with pytest.raises(ValueError):
        control_step(s, library, [], {}, nav, controller="pid")
