"""Unicycle kinematics, RK4 discretization and its exact Jacobians.

States are ``(px, py, theta)`` arrays and inputs are ``(v, omega)`` arrays.
Headings are kept wrapped to (-pi, pi].
"""

from dataclasses import dataclass
import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap an angle (scalar or array) to the half-open interval (-pi, pi]."""
    if np.ndim(a) == 0:
        return math.pi - (math.pi - float(a)) % TWO_PI
    a = np.asarray(a, dtype=float)
    return math.pi - np.mod(math.pi - a, TWO_PI)


def state_error(a, b):
    """a - b with the heading component wrapped."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d[..., 2] = wrap_angle(d[..., 2])
    return d


def make_state(px, py, theta):
    return np.array([px, py, wrap_angle(theta)], dtype=float)


@dataclass(frozen=True)
class InputBounds:
    v_min: float = 0.0
    v_max: float = 1.0
    omega_min: float = -2.0
    omega_max: float = 2.0

    def __post_init__(self):
        if not (self.v_min <= self.v_max and self.omega_min <= self.omega_max):
            raise ValueError(f"inconsistent input bounds {self}")

    @property
    def lower(self):
        return np.array([self.v_min, self.omega_min])

    @property
    def upper(self):
        return np.array([self.v_max, self.omega_max])

    def clamp(self, u):
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)

    def contains(self, u, tol=0.0):
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))


def unicycle_deriv(s, u):
    """Continuous-time unicycle vector field (v cos th, v sin th, omega)."""
    th = s[2]
    v, w = u[0], u[1]
    return np.array([v * math.cos(th), v * math.sin(th), w])


def rk4_step(s, u, Ts):
    """One classical RK4 step with zero-order-hold input; heading re-wrapped.

    Written out in scalars: it sits inside every simulation tick and every
    planner rollout, so it avoids small-array numpy overhead.
    """
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    px, py, th = float(s[0]), float(s[1]), float(s[2])
    v, w = float(u[0]), float(u[1])
    h2 = 0.5 * Ts
    # heading evolves linearly under ZOH input; positions see RK4 stages
    c1, s1 = math.cos(th), math.sin(th)
    th2 = th + h2 * w
    c2, s2 = math.cos(th2), math.sin(th2)
    th4 = th + Ts * w
    c4, s4 = math.cos(th4), math.sin(th4)
    nx = px + Ts / 6.0 * v * (c1 + 4.0 * c2 + c4)
    ny = py + Ts / 6.0 * v * (s1 + 4.0 * s2 + s4)
    nth = th + Ts * w
    return np.array([nx, ny, wrap_angle(nth)])


@dataclass
class Jacobians:
    A: np.ndarray  # (3, 3) d x_next / d x
    B: np.ndarray  # (3, 2) d x_next / d u


def linearize(s, u, Ts):
    """Exact Jacobians of :func:`rk4_step` at ``(s, u)``.

    For the unicycle the RK4 stages collapse: stage 2 and 3 share the heading
    ``th + Ts*w/2`` and stage 4 uses ``th + Ts*w``, so differentiating the
    closed-form update above is the same as chain-ruling the stages.
    """
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    th = float(s[2])
    v, w = float(u[0]), float(u[1])
    h2 = 0.5 * Ts
    c1, s1 = math.cos(th), math.sin(th)
    c2, s2 = math.cos(th + h2 * w), math.sin(th + h2 * w)
    c4, s4 = math.cos(th + Ts * w), math.sin(th + Ts * w)
    k = Ts / 6.0
    A = np.eye(3)
    A[0, 2] = -k * v * (s1 + 4.0 * s2 + s4)
    A[1, 2] = k * v * (c1 + 4.0 * c2 + c4)
    B = np.zeros((3, 2))
    B[0, 0] = k * (c1 + 4.0 * c2 + c4)
    B[1, 0] = k * (s1 + 4.0 * s2 + s4)
    B[0, 1] = -k * v * (4.0 * h2 * s2 + Ts * s4)
    B[1, 1] = k * v * (4.0 * h2 * c2 + Ts * c4)
    B[2, 1] = Ts
    return Jacobians(A, B)


def linearize_batch(x_seq, u_seq, Ts):
    """Vectorized :func:`linearize` over a trajectory; returns (A, B) stacks."""
    th = np.asarray(x_seq, dtype=float)[:, 2]
    v = np.asarray(u_seq, dtype=float)[:, 0]
    w = np.asarray(u_seq, dtype=float)[:, 1]
    h2 = 0.5 * Ts
    c1, s1 = np.cos(th), np.sin(th)
    c2, s2 = np.cos(th + h2 * w), np.sin(th + h2 * w)
    c4, s4 = np.cos(th + Ts * w), np.sin(th + Ts * w)
    k = Ts / 6.0
    n = th.shape[0]
    A = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    A[:, 0, 2] = -k * v * (s1 + 4.0 * s2 + s4)
    A[:, 1, 2] = k * v * (c1 + 4.0 * c2 + c4)
    B = np.zeros((n, 3, 2))
    B[:, 0, 0] = k * (c1 + 4.0 * c2 + c4)
    B[:, 1, 0] = k * (s1 + 4.0 * s2 + s4)
    B[:, 0, 1] = -k * v * (4.0 * h2 * s2 + Ts * s4)
    B[:, 1, 1] = k * v * (4.0 * h2 * c2 + Ts * c4)
    B[:, 2, 1] = Ts
    return A, B


def rollout(x0, u_seq, Ts):
    """Exact rollout of ``u_seq`` from ``x0``; returns ``len(u_seq) + 1`` states."""
    xs = np.empty((len(u_seq) + 1, 3))
    xs[0] = x0
    for i, u in enumerate(u_seq):
        xs[i + 1] = rk4_step(xs[i], u, Ts)
    return xs
