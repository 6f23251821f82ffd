"""Offline path library: waypoint grids and an ADMM/iLQR trajectory optimizer.

Each path solves a waypoint-constrained, input-bounded optimal control problem
by splitting it into

* a per-timestep projection (``zbar_update``) that handles waypoints, the
  terminal state and the input box,
* an unconstrained nonlinear tracking problem (``ilqr_solve``) that restores
  dynamic feasibility and yields time-varying feedback gains,
* a scaled dual update.

The converged iLQR solve supplies the nominal inputs, gains and reference
states stored in a :class:`PathEntry`.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import os
import time

import numpy as np

from .dynamics import InputBounds, linearize_batch, rk4_step, rollout, state_error

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# configuration and data types
# --------------------------------------------------------------------------

@dataclass
class TrajoptConfig:
    T: int = 16
    Ts: float = 0.5
    L: float = 4.0
    delta: float = 0.8
    tau: int = 1
    r_u: float = 0.1  # input effort weight
    goal_weight: float = 0.0  # pull of free states toward the goal
    eps_pri: float = 1e-3
    eps_dual: float = 1e-3
    max_outer: int = 200
    max_inner: int = 10
    inner_tol: float = 1e-6
    rho0: float = 1.0
    rho_mu: float = 10.0
    rho_tau_incr: float = 2.0
    rho_tau_decr: float = 2.0
    # residual balancing oscillates on this nonconvex splitting once the
    # duals settle; it only runs during the first iterations
    rho_adapt_iters: int = 20
    overrides: dict = field(default_factory=dict)  # {(path, waypoint): (x, y)}

    def waypoint_indices(self):
        return waypoint_indices(self.T, self.tau)


def waypoint_indices(T, tau):
    """Time indices {D, 2D, ..., tau*D} with D = T / (tau + 1)."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if T % (tau + 1) != 0:
        raise ValueError(f"horizon T={T} is not divisible into tau+1={tau + 1} segments")
    step = T // (tau + 1)
    return [step * k for k in range(1, tau + 1)]


@dataclass
class WaypointSet:
    path_index: int
    offset: float  # signed lateral offset (m)
    points: np.ndarray  # (tau, 2) positions
    start: np.ndarray
    goal: np.ndarray


@dataclass
class TrajectoryVars:
    x: np.ndarray  # (T+1, 3)
    u: np.ndarray  # (T, 2)

    def copy(self):
        return TrajectoryVars(self.x.copy(), self.u.copy())

    def __sub__(self, other):
        return TrajectoryVars(state_error(self.x, other.x), self.u - other.u)

    def __add__(self, other):
        return TrajectoryVars(self.x + other.x, self.u + other.u)

    def scaled(self, k):
        return TrajectoryVars(self.x * k, self.u * k)

    def max_abs(self):
        return float(max(np.max(np.abs(self.x)), np.max(np.abs(self.u), initial=0.0)))

    @classmethod
    def zeros_like(cls, other):
        return cls(np.zeros_like(other.x), np.zeros_like(other.u))


@dataclass
class AdmmState:
    z: TrajectoryVars
    zbar: TrajectoryVars
    v: TrajectoryVars
    rho: float
    iteration: int = 0
    primal_res: float = math.inf
    dual_res: float = math.inf


@dataclass
class PathEntry:
    path_index: int
    mu_star: np.ndarray  # (T, 2)
    K_star: np.ndarray  # (T, 2, 3)
    x_star: np.ndarray  # (T+1, 3)
    converged: bool
    primal_res: float
    dual_res: float
    waypoints: np.ndarray  # (tau, 2)
    offset: float = 0.0
    iterations: int = 0
    wall_time: float = 0.0

    @property
    def T(self):
        return len(self.mu_star)


@dataclass
class PathLibrary:
    entries: list
    delta: float
    Ts: float
    T: int
    center_path_index: int
    start: np.ndarray
    goal: np.ndarray

    def converged_indices(self):
        return [k for k, e in enumerate(self.entries) if e.converged]

    def __len__(self):
        return len(self.entries)


class NoConvergedPathError(RuntimeError):
    def __init__(self, library):
        super().__init__("no path in the library converged")
        self.library = library


# --------------------------------------------------------------------------
# waypoint grid
# --------------------------------------------------------------------------

def generate_waypoints(start, goal, L, delta, tau, overrides=None):
    """Lateral fan of waypoint sets between ``start`` and ``goal``.

    ``N = round(L / delta)`` paths (at least one) with lateral offsets centred
    on the start-goal line; along the line the ``tau`` waypoints split the
    start-goal distance into ``tau + 1`` equal parts, matching the equal time
    split of the horizon. ``overrides`` maps ``(path_index, waypoint_index)`` to
    a replacement position.
    """
    if L <= 0 or delta <= 0:
        raise ValueError("L and delta must be positive")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    n_paths = 1 if L < delta else max(1, int(round(L / delta)))
    d = goal[:2] - start[:2]
    dist = float(np.hypot(*d))
    along = d / dist if dist > 0 else np.array([math.cos(start[2]), math.sin(start[2])])
    lateral = np.array([-along[1], along[0]])
    overrides = overrides or {}
    sets = []
    for p in range(n_paths):
        offset = (p - (n_paths - 1) / 2.0) * delta
        pts = np.array([
            start[:2] + d * (k / (tau + 1)) + lateral * offset for k in range(1, tau + 1)
        ])
        for (pi, k), xy in overrides.items():
            if pi == p:
                if not 0 <= k < tau:
                    raise ValueError(f"override waypoint index {k} out of range")
                pts[k] = xy
        sets.append(WaypointSet(p, offset, pts, start.copy(), goal.copy()))
    return sets


# --------------------------------------------------------------------------
# ADMM pieces
# --------------------------------------------------------------------------

def zbar_update(z, v, wp, bounds, rho, cfg, wp_indices=None):
    """Per-timestep minimizer of J(zbar) + rho/2 |z - zbar + v|^2 on the constraint set.

    Inputs: ``rho (z+v) / (rho + 2 r_u)`` clamped to the box (exact, the
    quadratic is diagonal). States at waypoint times get the waypoint position
    with free heading, the terminal state is the goal, remaining states are
    the weighted average of the prox target and the goal.
    """
    T = z.u.shape[0]
    idx = waypoint_indices(T, len(wp.points)) if wp_indices is None else wp_indices
    tx = z.x + v.x
    tu = z.u + v.u
    u = bounds.clamp(rho * tu / (rho + 2.0 * cfg.r_u))
    g = np.asarray(wp.goal, dtype=float)
    if cfg.goal_weight > 0:
        wgt = 2.0 * cfg.goal_weight / (rho + 2.0 * cfg.goal_weight)
        x = tx + wgt * state_error(np.broadcast_to(g, tx.shape), tx)
    else:
        x = tx.copy()
    for k, i in enumerate(idx):
        x[i, :2] = wp.points[k]
        x[i, 2] = tx[i, 2]
    x[T] = g
    return TrajectoryVars(x, u)


@dataclass
class RiccatiResult:
    K: np.ndarray  # (T, 2, 3)
    w: np.ndarray  # (T, 2)
    P: np.ndarray  # (T+1, 3, 3)
    b: np.ndarray  # (T+1, 3)
    q: np.ndarray  # (T+1,)
    regularized: bool = False


def riccati_backward(A_seq, B_seq, c_seq, d_seq, rho):
    """Backward pass for min rho/2 sum |dx_i + c_i|^2 + rho/2 sum |du_i + d_i|^2.

    Subject to ``dx_{i+1} = A_i dx_i + B_i du_i``. The cost-to-go is
    ``V_i(dx) = 1/2 dx' P_i dx + b_i' dx + q_i`` and the minimizer is
    ``du_i = -K_i dx_i - w_i``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    A_seq = np.asarray(A_seq, dtype=float)
    B_seq = np.asarray(B_seq, dtype=float)
    c_seq = np.asarray(c_seq, dtype=float)
    d_seq = np.asarray(d_seq, dtype=float)
    T, n, m = B_seq.shape
    K = np.zeros((T, m, n))
    w = np.zeros((T, m))
    P = np.zeros((T + 1, n, n))
    b = np.zeros((T + 1, n))
    q = np.zeros(T + 1)
    In, Im = np.eye(n), np.eye(m)
    P[T] = rho * In
    b[T] = rho * c_seq[T]
    q[T] = 0.5 * rho * float(c_seq[T] @ c_seq[T])
    regularized = False
    for i in range(T - 1, -1, -1):
        A, B, c, d = A_seq[i], B_seq[i], c_seq[i], d_seq[i]
        Pn, bn = P[i + 1], b[i + 1]
        PB = Pn @ B
        Phi = rho * Im + B.T @ PB
        # Phi = rho I + B'PB has smallest eigenvalue >= rho, so trace/rho
        # bounds its condition number without a decomposition
        if np.trace(Phi) > 1e12 * rho or not np.all(np.isfinite(Phi)):
            Phi = Phi + 1e-9 * Im
            regularized = True
        Ki = np.linalg.solve(Phi, PB.T @ A)
        wi = np.linalg.solve(Phi, rho * d + B.T @ bn)
        Abar = A - B @ Ki
        Pi = rho * In + rho * Ki.T @ Ki + Abar.T @ Pn @ Abar
        P[i] = 0.5 * (Pi + Pi.T)
        Bw = B @ wi
        b[i] = rho * c + rho * Ki.T @ (wi - d) + Abar.T @ (bn - Pn @ Bw)
        r = d - wi
        q[i] = (0.5 * rho * float(c @ c) + 0.5 * rho * float(r @ r)
                + 0.5 * float(Bw @ Pn @ Bw) - float(bn @ Bw) + q[i + 1])
        K[i], w[i] = Ki, wi
    if regularized:
        log.warning("riccati_backward: regularized a near-singular Phi")
    return RiccatiResult(K, w, P, b, q, regularized)


def prox_objective(z, target, rho):
    dx = state_error(z.x, target.x)
    du = z.u - target.u
    return 0.5 * rho * (float(np.sum(dx * dx)) + float(np.sum(du * du)))


@dataclass
class IlqrResult:
    z: TrajectoryVars
    K: np.ndarray
    w: np.ndarray
    iterations: int
    objective_trace: list
    improved: bool = True


def ilqr_solve(zbar, v, xi, rho, Ts, max_inner=10, tol=1e-6, u_init=None):
    """Minimize rho/2 |z - zbar + v|^2 over exact rollouts from ``xi``.

    Gauss-Newton iLQR: linearize along the current rollout, run
    :func:`riccati_backward`, roll out the closed-loop update with a halving
    line search on the feedforward term. Stops when the relative decrease of
    the prox objective drops below ``tol``.
    """
    target = TrajectoryVars(zbar.x - v.x, zbar.u - v.u)
    T = zbar.u.shape[0]
    u = np.zeros((T, 2)) if u_init is None else np.array(u_init, dtype=float)
    x = rollout(xi, u, Ts)
    z = TrajectoryVars(x, u)
    J = prox_objective(z, target, rho)
    trace = [J]
    improved = True
    it = 0
    for it in range(1, max_inner + 1):
        A, B = linearize_batch(z.x[:-1], z.u, Ts)
        c = state_error(z.x, target.x)
        d = z.u - target.u
        ric = riccati_backward(A, B, c, d, rho)
        accepted = False
        alpha = 1.0
        for _ in range(9):
            xn = np.empty_like(z.x)
            un = np.empty_like(z.u)
            xn[0] = xi
            for i in range(T):
                dx = state_error(xn[i], z.x[i])
                un[i] = z.u[i] - alpha * ric.w[i] - ric.K[i] @ dx
                xn[i + 1] = rk4_step(xn[i], un[i], Ts)
            cand = TrajectoryVars(xn, un)
            Jn = prox_objective(cand, target, rho)
            if Jn <= J:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            improved = it > 1
            break
        decrease = J - Jn
        z, J = cand, Jn
        trace.append(J)
        if decrease <= tol * max(J + decrease, 1e-12):
            break
    A, B = linearize_batch(z.x[:-1], z.u, Ts)
    ric = riccati_backward(A, B, state_error(z.x, target.x), z.u - target.u, rho)
    return IlqrResult(z, ric.K, ric.w, it, trace, improved)


def dual_update(v, z, zbar):
    return v + (z - zbar)


def rho_update(rho, primal_res, dual_res, mu=10.0, tau_incr=2.0, tau_decr=2.0):
    """Residual-balancing penalty update; returns the new rho."""
    if primal_res < 0 or dual_res < 0:
        raise ValueError("residuals must be non-negative")
    if primal_res > mu * dual_res:
        return rho * tau_incr
    if dual_res > mu * primal_res:
        return rho / tau_decr
    return rho


def _waypoint_deviation(x, wp, idx):
    if len(idx) == 0:
        return 0.0
    return float(np.max(np.linalg.norm(x[idx, :2] - wp.points, axis=1)))


def _interpolated_init(wp, T):
    s = np.linspace(0.0, 1.0, T + 1)[:, None]
    dx = state_error(wp.goal, wp.start)
    x = wp.start + s * dx
    return TrajectoryVars(x, np.zeros((T, 2)))


def plan_path(wp, cfg, bounds=None, record=None):
    """Run ADMM for one waypoint set and return its :class:`PathEntry`."""
    bounds = bounds or InputBounds()
    t0 = time.perf_counter()
    T, Ts = cfg.T, cfg.Ts
    idx = waypoint_indices(T, len(wp.points))
    xi = np.asarray(wp.start, dtype=float)
    goal = np.asarray(wp.goal, dtype=float)
    z0 = _interpolated_init(wp, T)
    st = AdmmState(z=z0, zbar=z0.copy(), v=TrajectoryVars.zeros_like(z0), rho=cfg.rho0)
    converged = False
    u_warm = None
    for k in range(cfg.max_outer):
        zbar_new = zbar_update(st.z, st.v, wp, bounds, st.rho, cfg, idx)
        res = ilqr_solve(zbar_new, st.v, xi, st.rho, Ts, cfg.max_inner, cfg.inner_tol, u_warm)
        z = res.z
        u_warm = z.u
        v = dual_update(st.v, z, zbar_new)
        primal = (z - zbar_new).max_abs()
        dual = st.rho * (zbar_new - st.zbar).max_abs() if k > 0 else math.inf
        st.z, st.zbar, st.v = z, zbar_new, v
        st.iteration, st.primal_res, st.dual_res = k + 1, primal, dual
        if record is not None:
            record.append((k, st.rho, primal, dual))
        wp_dev = _waypoint_deviation(z.x, wp, idx)
        goal_dev = float(np.max(np.abs(state_error(z.x[T], goal))))
        if (primal <= cfg.eps_pri and dual <= cfg.eps_dual
                and wp_dev <= cfg.eps_pri and goal_dev <= cfg.eps_pri):
            converged = True
            break
        if k == 0:
            continue
        new_rho = st.rho
        if k < cfg.rho_adapt_iters:
            new_rho = rho_update(st.rho, primal, dual, cfg.rho_mu, cfg.rho_tau_incr, cfg.rho_tau_decr)
        if new_rho != st.rho:
            st.v = st.v.scaled(st.rho / new_rho)
            st.rho = new_rho
    mu = bounds.clamp(st.z.u)
    x_star = rollout(xi, mu, Ts)
    A, B = linearize_batch(x_star[:-1], mu, Ts)
    zero_c = np.zeros((T + 1, 3))
    K = riccati_backward(A, B, zero_c, np.zeros((T, 2)), st.rho).K
    wp_dev = _waypoint_deviation(x_star, wp, idx)
    goal_dev = float(np.max(np.abs(state_error(x_star[T], goal))))
    clamp_mag = float(np.max(np.abs(mu - st.z.u), initial=0.0))
    converged = (converged and wp_dev <= cfg.eps_pri and goal_dev <= cfg.eps_pri
                 and clamp_mag <= cfg.eps_pri)
    return PathEntry(
        path_index=wp.path_index,
        mu_star=mu,
        K_star=K,
        x_star=x_star,
        converged=converged,
        primal_res=st.primal_res,
        dual_res=st.dual_res,
        waypoints=np.array(wp.points, dtype=float),
        offset=wp.offset,
        iterations=st.iteration,
        wall_time=time.perf_counter() - t0,
    )


def _plan_job(args):
    wp, cfg, bounds = args
    return plan_path(wp, cfg, bounds)


def planner_workers(n_paths, workers=None):
    if workers is None:
        env = os.environ.get("NAV_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(int(workers), n_paths))


def build_library(start, goal, cfg, bounds=None, workers=None):
    """Plan every waypoint set of the grid, in parallel when allowed.

    Non-converged paths are kept in the library but flagged; raises
    :class:`NoConvergedPathError` when none converged.
    """
    bounds = bounds or InputBounds()
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    sets = generate_waypoints(start, goal, cfg.L, cfg.delta, cfg.tau, cfg.overrides)
    jobs = [(wp, cfg, bounds) for wp in sets]
    n_workers = planner_workers(len(sets), workers)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            entries = list(pool.map(_plan_job, jobs))
    else:
        entries = [_plan_job(j) for j in jobs]
    entries.sort(key=lambda e: e.path_index)
    lib = PathLibrary(
        entries=entries,
        delta=cfg.delta,
        Ts=cfg.Ts,
        T=cfg.T,
        center_path_index=len(entries) // 2,
        start=start,
        goal=goal,
    )
    bad = [e.path_index for e in entries if not e.converged]
    if bad:
        log.warning("paths %s did not converge and are excluded from selection", bad)
    if len(bad) == len(entries):
        raise NoConvergedPathError(lib)
    return lib
