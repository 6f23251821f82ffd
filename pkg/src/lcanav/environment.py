"""Analytic obstacle boundary functions and the heading-lifted barrier.

Every shape reports a signed distance ``h`` (positive outside, metres), its
gradient and Hessian with respect to the query position. Obstacles may carry a
looped polyline motion script; their geometry is otherwise immutable, and
:meth:`Obstacle.at` returns a rigidly translated copy for a given time.
"""

from collections import deque
from dataclasses import dataclass, field, replace
import math
from typing import Optional, Sequence

import numpy as np

_FALLBACK_DIR = (1.0, 0.0)


@dataclass
class BoundaryEval:
    h: float
    grad: np.ndarray  # (2,)
    hess: np.ndarray  # (2, 2)
    degenerate: bool = False  # gradient fell back to a fixed direction


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")

    def translated(self, d):
        return Circle((self.center[0] + d[0], self.center[1] + d[1]), self.radius)

    def evaluate(self, p):
        dx = p[0] - self.center[0]
        dy = p[1] - self.center[1]
        r = math.hypot(dx, dy)
        if r == 0.0:
            return BoundaryEval(-self.radius, np.array(_FALLBACK_DIR), np.zeros((2, 2)), True)
        nx, ny = dx / r, dy / r
        hess = np.array([[(1.0 - nx * nx) / r, -nx * ny / r], [-nx * ny / r, (1.0 - ny * ny) / r]])
        return BoundaryEval(r - self.radius, np.array([nx, ny]), hess)


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box with corners rounded by ``corner_radius``.

    The rounded box is the inner box shrunk by ``corner_radius`` dilated by a
    disk of that radius, so its outline keeps the given extents.
    """

    min_corner: tuple
    max_corner: tuple
    corner_radius: float = 0.05

    def __post_init__(self):
        if not (self.min_corner[0] < self.max_corner[0] and self.min_corner[1] < self.max_corner[1]):
            raise ValueError("rectangle min corner must be below max corner")
        half = min(self.max_corner[0] - self.min_corner[0], self.max_corner[1] - self.min_corner[1]) / 2
        if not 0.0 <= self.corner_radius < half:
            raise ValueError("corner radius must be in [0, half the short side)")

    def translated(self, d):
        return Rectangle(
            (self.min_corner[0] + d[0], self.min_corner[1] + d[1]),
            (self.max_corner[0] + d[0], self.max_corner[1] + d[1]),
            self.corner_radius,
        )

    def evaluate(self, p):
        r = self.corner_radius
        cx = 0.5 * (self.min_corner[0] + self.max_corner[0])
        cy = 0.5 * (self.min_corner[1] + self.max_corner[1])
        hx = 0.5 * (self.max_corner[0] - self.min_corner[0]) - r
        hy = 0.5 * (self.max_corner[1] - self.min_corner[1]) - r
        dx, dy = p[0] - cx, p[1] - cy
        sx = 1.0 if dx >= 0 else -1.0
        sy = 1.0 if dy >= 0 else -1.0
        qx, qy = abs(dx) - hx, abs(dy) - hy
        if qx > 0 and qy > 0:
            d = math.hypot(qx, qy)
            nx, ny = sx * qx / d, sy * qy / d
            hess = np.array([[(1.0 - nx * nx) / d, -nx * ny / d], [-nx * ny / d, (1.0 - ny * ny) / d]])
            return BoundaryEval(d - r, np.array([nx, ny]), hess)
        hess = np.zeros((2, 2))
        if qx >= qy:
            return BoundaryEval(qx - r, np.array([sx, 0.0]), hess)
        return BoundaryEval(qy - r, np.array([0.0, sy]), hess)


@dataclass(frozen=True)
class Composite:
    """Union of shapes; reports the member with the smallest distance."""

    members: tuple

    def __post_init__(self):
        if len(self.members) == 0:
            raise ValueError("composite needs at least one member")

    def translated(self, d):
        return Composite(tuple(m.translated(d) for m in self.members))

    def evaluate(self, p):
        best = None
        for m in self.members:
            ev = m.evaluate(p)
            if best is None or ev.h < best.h:
                best = ev
        return best


@dataclass(frozen=True)
class MotionScript:
    """Constant-speed traversal of a closed polyline starting at its first vertex."""

    waypoints: tuple
    speed: float

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("motion script needs at least two waypoints")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")

    def _segments(self):
        pts = [np.asarray(w, dtype=float) for w in self.waypoints]
        pts.append(pts[0])
        return pts

    @property
    def loop_length(self):
        pts = self._segments()
        return sum(float(np.linalg.norm(b - a)) for a, b in zip(pts[:-1], pts[1:]))

    def position(self, t):
        pts = self._segments()
        total = self.loop_length
        if total == 0.0:
            return pts[0].copy()
        s = (self.speed * t) % total
        for a, b in zip(pts[:-1], pts[1:]):
            seg = float(np.linalg.norm(b - a))
            if s <= seg and seg > 0:
                return a + (b - a) * (s / seg)
            s -= seg
        return pts[0].copy()

    def velocity(self, t):
        pts = self._segments()
        total = self.loop_length
        if total == 0.0 or self.speed == 0.0:
            return np.zeros(2)
        s = (self.speed * t) % total
        for a, b in zip(pts[:-1], pts[1:]):
            seg = float(np.linalg.norm(b - a))
            if s < seg:
                return (b - a) / seg * self.speed
            s -= seg
        return np.zeros(2)


@dataclass(frozen=True)
class Obstacle:
    """A shape with an optional motion script.

    Scripted obstacles are authored with their reference point at the origin of
    the script: at time ``t`` the shape is translated by ``script(t) - script(0)``.
    """

    shape: object
    id: int = 0
    motion: Optional[MotionScript] = None

    @property
    def moving(self):
        return self.motion is not None

    def displacement(self, t):
        if self.motion is None:
            return np.zeros(2)
        return self.motion.position(t) - self.motion.position(0.0)

    def at(self, t):
        """Static snapshot of this obstacle at time ``t`` (same id)."""
        if self.motion is None:
            return self
        return replace(self, shape=self.shape.translated(self.displacement(t)))

    def reference_point(self, t=0.0):
        """Tracked point of the obstacle (script position, or shape anchor)."""
        if self.motion is not None:
            return self.motion.position(t)
        return np.asarray(_anchor(self.shape), dtype=float)


def _anchor(shape):
    if isinstance(shape, Circle):
        return shape.center
    if isinstance(shape, Rectangle):
        return (0.5 * (shape.min_corner[0] + shape.max_corner[0]),
                0.5 * (shape.min_corner[1] + shape.max_corner[1]))
    return _anchor(shape.members[0])


def eval_boundary(p, obs):
    """Signed distance, gradient and Hessian of ``obs`` at position ``p``."""
    shape = obs.shape if isinstance(obs, Obstacle) else obs
    return shape.evaluate(p)


@dataclass
class HoCbfEval:
    hbar: float
    grad_state: np.ndarray  # d hbar / d (px, py, theta)
    obstacle_term_coeff: np.ndarray  # d hbar / d (obstacle translation)
    h: float
    boundary: BoundaryEval


def ho_cbf(s, obs, w_h):
    """Heading-lifted barrier ``h + w_h * grad(h) . (cos th, sin th)``.

    To first order this is ``h`` evaluated at the look-ahead point
    ``p + w_h * b``, which is what makes the turn rate appear in its
    derivative.
    """
    ev = eval_boundary(s[:2], obs)
    c, sn = math.cos(s[2]), math.sin(s[2])
    b = np.array([c, sn])
    b_perp = np.array([-sn, c])
    hbar = ev.h + w_h * float(ev.grad @ b)
    grad_p = ev.grad + w_h * (ev.hess @ b)
    grad_state = np.array([grad_p[0], grad_p[1], w_h * float(ev.grad @ b_perp)])
    # rigid translation of the obstacle: h(p - c) => d/dc = -d/dp
    return HoCbfEval(hbar, grad_state, -grad_p, ev.h, ev)


@dataclass
class ObstacleTrack:
    """Recent observed reference positions of one obstacle."""

    maxlen: int = 8
    staleness: float = 0.5
    history: deque = field(default_factory=deque)

    def record(self, t, position):
        if self.history and t <= self.history[-1][0]:
            raise ValueError("track timestamps must be strictly increasing")
        self.history.append((float(t), np.array(position, dtype=float)))
        while len(self.history) > self.maxlen:
            self.history.popleft()

    @property
    def estimated_velocity(self):
        return estimate_velocity(self, None)


def estimate_velocity(track, now=None):
    """Backward difference of the two most recent samples.

    Zero with fewer than two samples, or when the newest sample (or the gap
    between the two) is older than the staleness threshold.
    """
    if len(track.history) < 2:
        return np.zeros(2)
    (t0, p0), (t1, p1) = track.history[-2], track.history[-1]
    if t1 - t0 > track.staleness:
        return np.zeros(2)
    if now is not None and now - t1 > track.staleness:
        return np.zeros(2)
    return (p1 - p0) / (t1 - t0)


def visible_obstacles(s, world: Sequence[Obstacle], sensing_radius):
    if sensing_radius <= 0:
        raise ValueError("sensing radius must be positive")
    p = s[:2]
    return [j for j, obs in enumerate(world) if eval_boundary(p, obs).h <= sensing_radius]


def min_distance(p, world):
    """Smallest signed distance over the world (inf when empty)."""
    return min((eval_boundary(p, obs).h for obs in world), default=math.inf)


def collision_check(p, world, margin=0.0):
    """True iff every obstacle's signed distance exceeds ``margin``."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    return min_distance(p, world) > margin
