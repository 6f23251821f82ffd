"""Reactive safety filters: CBF-QP and the on-manifold MCBF-QP.

Both filters project a nominal command onto the set of inputs satisfying
``d/dt hbar >= -alpha * hbar`` for every visible obstacle, where ``hbar`` is
the heading-lifted barrier from :func:`lcanav.environment.ho_cbf`. The MCBF
variant adds, for the nearest obstacle within ``d_act``, a lower bound on the
speed along the boundary tangent so that the filtered flow cannot come to rest
on the boundary. Input bounds are applied by clamping after the QP.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .dynamics import InputBounds
from .environment import Composite, eval_boundary, estimate_velocity, ho_cbf
from .qp import LinearConstraint, solve_qp, solve_qp_with_slack

MAX_CONSTRAINTS = 16
FAILURE_STATUSES = ("relaxed_manifold", "relaxed_slack")


@dataclass(frozen=True)
class FilterParams:
    alpha_gain: float = 1.0  # 1/s
    gamma: float = 0.2  # m/s; lower bound on tangential speed
    w_h: float = 0.3  # m
    d_act: float = 1.0  # m
    hysteresis_margin: float = 0.05  # m
    sensing_radius: float = 3.0  # m
    slack_penalty: float = 1e6
    # keep the tangent sign while the obstacle stays within d_act (consistent
    # circulation); False applies the reference rule every tick
    sticky_sign: bool = True
    # constrain the tangential speed of the look-ahead point p + w_h b rather
    # than of p itself; adds a turn-rate term so a robot facing against the
    # tangent can satisfy the row by turning instead of reversing
    manifold_lookahead: bool = True
    bounds: InputBounds = field(default_factory=InputBounds)

    def __post_init__(self):
        if self.alpha_gain <= 0:
            raise ValueError("alpha_gain must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be strictly positive")
        if self.w_h < 0 or self.d_act <= 0 or self.hysteresis_margin < 0:
            raise ValueError("w_h, hysteresis_margin must be >= 0 and d_act > 0")
        if self.sensing_radius <= 0:
            raise ValueError("sensing_radius must be positive")


@dataclass
class FilterDiagnostics:
    status: str  # optimal | relaxed_manifold | relaxed_slack | none
    u_qp: np.ndarray
    active_set: list = field(default_factory=list)
    n_constraints: int = 0
    manifold: bool = False
    clamp_magnitude: float = 0.0
    slack: float = 0.0
    min_h: float = math.inf
    solve_time: float = 0.0

    @property
    def failed(self):
        return self.status in FAILURE_STATUSES

    @property
    def clamped(self):
        return self.clamp_magnitude > 0.0


class TangentMemory(dict):
    """Last tangent sign chosen per obstacle id."""


def barrier_constraint(s, obs, obs_vel, params):
    """Linear row ``a . u >= b`` encoding ``d/dt hbar >= -alpha * hbar``.

    ``d/dt hbar = grad_p . b(theta) v + d_theta hbar * omega + coeff . v_obs``;
    the unicycle has no drift.
    """
    ev = ho_cbf(s, obs, params.w_h)
    c, sn = math.cos(s[2]), math.sin(s[2])
    g = ev.grad_state
    a = np.array([g[0] * c + g[1] * sn, g[2]])
    obs_term = float(ev.obstacle_term_coeff @ np.asarray(obs_vel, dtype=float))
    b = -params.alpha_gain * ev.hbar - obs_term
    return LinearConstraint(a, b, "barrier", getattr(obs, "id", -1))


def tangent_direction(s, obs, ref_point, params, memory=None, sticky=False):
    """Boundary tangent ``rot90(grad h)`` signed toward ``ref_point``.

    Returns ``None`` outside the activation distance or where the gradient is
    a fallback. Inside the hysteresis band the remembered sign is kept; with
    ``sticky`` any remembered sign is kept.
    """
    ev = eval_boundary(s[:2], obs)
    if ev.h > params.d_act or ev.degenerate:
        return None
    gn = math.hypot(ev.grad[0], ev.grad[1])
    if gn == 0.0:
        return None
    r = np.array([-ev.grad[1], ev.grad[0]]) / gn
    dot = float(r @ (np.asarray(ref_point, dtype=float) - np.asarray(s[:2], dtype=float)))
    key = getattr(obs, "id", -1)
    prev = memory.get(key) if memory is not None else None
    if prev is not None and (sticky or abs(dot) <= params.hysteresis_margin):
        sign = prev
    else:
        sign = 1.0 if dot >= 0.0 else -1.0
    if memory is not None:
        memory[key] = sign
    return sign * r


def manifold_constraint(s, t, gamma, w_h=0.0):
    """Tangential speed bound ``t . d/dt (p + w_h b) >= gamma``.

    With ``w_h = 0`` this is ``(t . b) v >= gamma`` with no turn-rate term.
    """
    c, sn = math.cos(s[2]), math.sin(s[2])
    a = np.array([t[0] * c + t[1] * sn, w_h * (-t[0] * sn + t[1] * c)])
    return LinearConstraint(a, float(gamma), "manifold")


def _gather(s, world, tracks, params, now):
    """Visible obstacles sorted by distance, capped, with their velocities.

    Composite obstacles are split into their members (same id) so that each
    smooth piece gets its own barrier row; a single row on the union min
    leaves the second wall of a concave corner unconstrained.
    """
    p = s[:2]
    near = []
    for obs in world:
        if isinstance(obs.shape, Composite):
            parts = [replace(obs, shape=m) for m in obs.shape.members]
        else:
            parts = [obs]
        for part in parts:
            h = eval_boundary(p, part).h
            if h <= params.sensing_radius:
                near.append((h, part))
    near.sort(key=lambda e: e[0])
    near = near[:MAX_CONSTRAINTS]
    out = []
    for h, obs in near:
        vel = np.zeros(2)
        if tracks is not None and obs.id in tracks:
            vel = estimate_velocity(tracks[obs.id], now)
        out.append((h, obs, vel))
    return out


def _filter(s, u_nom, world, tracks, params, memory, ref_point, use_manifold, now):
    u_nom = np.asarray(u_nom, dtype=float)
    near = _gather(s, world, tracks, params, now)
    min_h = near[0][0] if near else math.inf
    barriers = [barrier_constraint(s, obs, vel, params) for _, obs, vel in near]
    if not barriers:
        u = params.bounds.clamp(u_nom)
        return u, FilterDiagnostics("none", u_nom, [], 0, False,
                                    float(np.max(np.abs(u - u_nom))), 0.0, min_h)
    cons = list(barriers)
    has_manifold = False
    if memory is not None:
        # forget signs of obstacles that left the activation band
        for key in [k for k in memory if not any(o.id == k and h <= params.d_act for h, o, _ in near)]:
            del memory[key]
    sol = None
    if use_manifold and ref_point is not None:
        # nearest piece first; in a concave corner its tangent can run into
        # the adjacent piece, so the next one within d_act is tried
        for h, obs, _ in near[:3]:
            if h > params.d_act:
                break
            t = tangent_direction(s, obs, ref_point, params, memory, params.sticky_sign)
            if t is None:
                continue
            mc = manifold_constraint(s, t, params.gamma,
                                     params.w_h if params.manifold_lookahead else 0.0)
            mc.obstacle_id = obs.id
            has_manifold = True
            sol = solve_qp(u_nom, barriers + [mc])
            if sol.optimal:
                cons = barriers + [mc]
                break
    if sol is None:
        sol = solve_qp(u_nom, cons)
    status, slack, elapsed = "optimal", 0.0, sol.solve_time
    if not sol.optimal and has_manifold:
        sol = solve_qp(u_nom, barriers)
        status = "relaxed_manifold"
        elapsed += sol.solve_time
        cons = barriers
    if not sol.optimal:
        sol, slack = solve_qp_with_slack(u_nom, barriers, params.slack_penalty)
        status = "relaxed_slack"
        elapsed += sol.solve_time
        cons = barriers
    u = params.bounds.clamp(sol.u)
    diag = FilterDiagnostics(
        status, sol.u, sol.active_set, len(cons), has_manifold and status == "optimal",
        float(np.max(np.abs(u - sol.u))), slack, min_h, elapsed,
    )
    return u, diag


def mcbf_filter(s, u_nom, world, tracks, params, memory, ref_point, now=None):
    """MCBF-QP filter; ``world`` holds obstacle snapshots at the current time."""
    return _filter(s, u_nom, world, tracks, params, memory, ref_point, True, now)


def cbf_filter(s, u_nom, world, tracks, params, now=None):
    """CBF-QP baseline (barrier rows only)."""
    return _filter(s, u_nom, world, tracks, params, None, None, False, now)


def single_integrator_filter(p, u_nom, obstacles, alpha_gain=1.0):
    """CBF-QP for ``p' = u`` in the plane: ``grad h . u >= -alpha h`` per obstacle."""
    cons = []
    for obs in obstacles:
        ev = eval_boundary(p, obs)
        cons.append(LinearConstraint(np.array(ev.grad, dtype=float), -alpha_gain * ev.h))
    sol = solve_qp(u_nom, cons)
    if not sol.optimal:
        sol, _ = solve_qp_with_slack(u_nom, cons)
    return sol.u, sol
