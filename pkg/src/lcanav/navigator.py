"""Online layer: path selection, reference progression and the 2DOF law.

One :func:`control_step` call per control tick predicts the next state,
picks the nearest library path, advances the reference index, forms
``mu_i + K_i (x_i - s)`` and passes it through the safety filter.
"""

from dataclasses import dataclass, field
import math
import time

import numpy as np

from .dynamics import rk4_step, state_error, wrap_angle
from .safety import FilterParams, TangentMemory, cbf_filter, mcbf_filter

TIE_TOL = 1e-9


@dataclass(frozen=True)
class NavParams:
    tol_adv: float = 0.3  # m
    goal_tol: float = 0.3  # m
    lookback: int = 2
    # "clock": the reference follows elapsed time, paused while the robot is
    # farther than tol_adv from it, and catches up past points the robot has
    # overtaken. "proximity": skip every point within tol_adv (advance_index).
    progress: str = "clock"
    control_period: float = 0.01  # s
    # once the reference is exhausted (i = T) outside the goal tolerance, steer
    # at the goal: v = k_v d cos(a), omega = k_w a with bearing error a
    terminal_k_v: float = 0.5
    terminal_k_w: float = 1.5


@dataclass
class NavigatorState:
    q: int = -1
    i: int = 0
    last_command: np.ndarray = field(default_factory=lambda: np.zeros(2))
    memory: TangentMemory = field(default_factory=TangentMemory)
    ticks: int = 0
    goal_reached: bool = False
    phase: float = 0.0  # reference clock (s along the path)


@dataclass
class StepDiagnostics:
    status: str
    u_nom: np.ndarray
    q: int
    i: int
    switched: bool = False
    filter: object = None
    wall_time: float = 0.0


def predict_next(s, u_prev, Ts):
    return rk4_step(s, u_prev, Ts)


def _positions(lib):
    """Cached (indices, positions[P, T+1, 2]) of the converged entries."""
    cache = getattr(lib, "_nav_cache", None)
    if cache is None:
        idx = lib.converged_indices()
        pos = np.stack([lib.entries[k].x_star[:, :2] for k in idx])
        cache = (np.array(idx), pos)
        lib._nav_cache = cache
    return cache


def select_path(lib, x_pred):
    """Nearest converged path by position; ties go toward the center index, then lower."""
    idx, pos = _positions(lib)
    d = np.min(np.hypot(pos[..., 0] - x_pred[0], pos[..., 1] - x_pred[1]), axis=1)
    best = float(np.min(d))
    ties = [int(p) for p, dp in zip(idx, d) if dp - best <= TIE_TOL]
    c = lib.center_path_index
    return min(ties, key=lambda p: (abs(p - c), p))


def nearest_index(entry, s):
    pts = entry.x_star[:, :2]
    return int(np.argmin(np.hypot(pts[:, 0] - s[0], pts[:, 1] - s[1])))


def advance_index(entry, s, i, tol_adv, lookback=2):
    """Move the reference index forward; never backward.

    Steps past points within ``tol_adv``, floored at the nearest point minus
    ``lookback``.
    """
    T = len(entry.mu_star)
    i = max(int(i), nearest_index(entry, s) - lookback, 0)
    xs = entry.x_star
    while i < T and math.hypot(xs[i, 0] - s[0], xs[i, 1] - s[1]) <= tol_adv:
        i += 1
    return min(i, T)


def _overtook(xs, i, s):
    """True when ``s`` is level with or beyond ``x*_{i+1}`` along segment i."""
    dx, dy = xs[i + 1, 0] - xs[i, 0], xs[i + 1, 1] - xs[i, 1]
    if dx == 0.0 and dy == 0.0:
        return False
    return (s[0] - xs[i + 1, 0]) * dx + (s[1] - xs[i + 1, 1]) * dy >= 0.0


def reference_at(entry, phase, Ts):
    """Reference state linearly interpolated at clock ``phase`` (heading wrapped)."""
    T = len(entry.mu_star)
    u = phase / Ts
    i = min(int(math.floor(u)), T)
    if i >= T:
        return entry.x_star[T].copy()
    frac = u - i
    x0 = entry.x_star[i]
    return x0 + frac * state_error(entry.x_star[i + 1], x0)


def clock_index(entry, s, phase, Ts, dt, tol_adv, lookback=2):
    """Schedule-following reference; returns ``(i, phase')`` with ``i = floor(phase/Ts)``.

    The clock ticks only while the robot is within ``tol_adv`` of the
    interpolated reference (delays pause it). It is floored at the nearest
    point minus ``lookback`` and pushed past points the robot has overtaken,
    so it never runs backward.
    """
    T = len(entry.mu_star)
    xs = entry.x_star
    ref = reference_at(entry, phase, Ts)
    if math.hypot(ref[0] - s[0], ref[1] - s[1]) <= tol_adv:
        phase += dt
    phase = max(phase, (nearest_index(entry, s) - lookback) * Ts)
    j = min(int(math.floor(phase / Ts)), T)
    while j < T and _overtook(xs, j, s):
        j += 1
        phase = max(phase, j * Ts)
    phase = min(phase, T * Ts)
    return min(int(math.floor(phase / Ts)), T), phase


def nominal_input(entry, i, s):
    """``mu_i + K_i (x*_i - s)``; at the terminal index the feedforward is zero."""
    T = len(entry.mu_star)
    e = state_error(entry.x_star[i], s)
    if i >= T:
        return entry.K_star[T - 1] @ e
    return entry.mu_star[i] + entry.K_star[i] @ e


def nominal_input_at(entry, phase, Ts, s):
    """2DOF law against the interpolated reference; gains held per interval."""
    T = len(entry.mu_star)
    i = min(int(math.floor(phase / Ts)), T)
    e = state_error(reference_at(entry, phase, Ts), s)
    if i >= T:
        return entry.K_star[T - 1] @ e
    return entry.mu_star[i] + entry.K_star[i] @ e


def terminal_input(goal, s, k_v, k_w):
    """Bearing-steering law toward ``goal``; used after the reference runs out."""
    dx, dy = goal[0] - s[0], goal[1] - s[1]
    if dx == 0.0 and dy == 0.0:
        return np.zeros(2)
    a = wrap_angle(math.atan2(dy, dx) - s[2])
    return np.array([k_v * math.hypot(dx, dy) * max(math.cos(a), 0.0), k_w * a])


def control_step(s, lib, world, tracks, nav, params=None, nav_params=None,
                 controller="mcbf", now=None):
    """One tick of the online layer. Mutates and returns ``nav``."""
    t0 = time.perf_counter()
    params = params or FilterParams()
    nav_params = nav_params or NavParams()
    goal = lib.goal
    if nav.goal_reached or math.hypot(s[0] - goal[0], s[1] - goal[1]) <= nav_params.goal_tol:
        nav.goal_reached = True
        nav.last_command = np.zeros(2)
        nav.ticks += 1
        return nav.last_command, nav, StepDiagnostics("hold", np.zeros(2), nav.q, nav.i,
                                                      wall_time=time.perf_counter() - t0)
    switched = False
    if nav.q < 0:
        conv = lib.converged_indices()
        c = lib.center_path_index
        nav.q = min(conv, key=lambda p: (abs(p - c), p))
        nav.i = 0
    else:
        x_pred = predict_next(s, nav.last_command, nav_params.control_period)
        q = select_path(lib, x_pred)
        if q != nav.q:
            nav.q = q
            nav.i = nearest_index(lib.entries[q], s)
            nav.phase = nav.i * lib.Ts
            switched = True
    entry = lib.entries[nav.q]
    clock = nav_params.progress == "clock"
    if clock:
        nav.i, nav.phase = clock_index(entry, s, nav.phase, lib.Ts, nav_params.control_period,
                                       nav_params.tol_adv, nav_params.lookback)
    else:
        nav.i = advance_index(entry, s, nav.i, nav_params.tol_adv, nav_params.lookback)
    if nav.i >= entry.T:
        u_nom = terminal_input(goal, s, nav_params.terminal_k_v, nav_params.terminal_k_w)
    elif clock:
        u_nom = nominal_input_at(entry, nav.phase, lib.Ts, s)
    else:
        u_nom = nominal_input(entry, nav.i, s)
    if controller == "mcbf":
        u, fd = mcbf_filter(s, u_nom, world, tracks, params, nav.memory, goal[:2], now)
    elif controller == "cbf":
        u, fd = cbf_filter(s, u_nom, world, tracks, params, now)
    else:
        raise ValueError(f"unknown controller {controller!r}")
    nav.last_command = u
    nav.ticks += 1
    return u, nav, StepDiagnostics(fd.status, u_nom, nav.q, nav.i, switched, fd,
                                   time.perf_counter() - t0)
