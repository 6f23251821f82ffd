"""Deterministic fixed-step simulator, episode runner and benchmark metrics.

Every tick: move scripted obstacles and record their tracks, check the robot
state (collision, goal), run one control step, push the command through a
rate-limited actuator, and integrate the robot with the measured input.
"""

from dataclasses import dataclass, field
import csv
import io
import math

import numpy as np

from .dynamics import InputBounds, make_state, rk4_step
from .environment import (Circle, Composite, MotionScript, Obstacle, ObstacleTrack,
                          Rectangle, eval_boundary, min_distance)
from .navigator import NavigatorState, NavParams, control_step
from .safety import FAILURE_STATUSES, FilterParams

TRACE_HEADER = "t,cmd_v,cmd_w,meas_v,meas_w,px,py,theta,min_h,path_q,ref_i,qp_status"
CONTROLLERS = ("cbf", "mcbf")
METRIC_COLUMNS = ("qp_failures", "safety_pct", "success_pct", "v_bar", "omega_bar", "e_v", "e_omega")


@dataclass
class Scenario:
    name: str
    bounds: tuple  # (xmin, xmax, ymin, ymax)
    obstacles: list
    start: np.ndarray
    goal: np.ndarray
    sensing_radius: float = 3.0
    control_period: float = 0.01
    accel_limits: tuple = (2.0, 4.0)  # m/s^2, rad/s^2
    duration: float = 40.0
    seed: int = 0
    start_jitter: tuple = (0.15, 0.15)  # m, rad

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        if self.control_period <= 0 or self.duration <= 0:
            raise ValueError("control period and duration must be positive")

    def inside(self, p):
        x0, x1, y0, y1 = self.bounds
        return x0 < p[0] < x1 and y0 < p[1] < y1

    def validate(self):
        """Start and goal strictly inside the bounds and clear of obstacles."""
        world = self.world_at(0.0)
        for name, s in (("start", self.start), ("goal", self.goal)):
            if not self.inside(s):
                raise ValueError(f"{name} lies outside the world bounds")
            if min_distance(s[:2], world) <= 0:
                raise ValueError(f"{name} lies inside an obstacle")

    def world_at(self, t):
        return [o.at(t) for o in self.obstacles]


@dataclass
class TraceRecord:
    t: float
    cmd_v: float
    cmd_w: float
    meas_v: float
    meas_w: float
    px: float
    py: float
    theta: float
    min_h: float
    path_q: int
    ref_i: int
    qp_status: str


@dataclass
class Trace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(TRACE_HEADER + "\n")
        for r in self.records:
            buf.write(",".join([
                repr(r.t), repr(r.cmd_v), repr(r.cmd_w), repr(r.meas_v), repr(r.meas_w),
                repr(r.px), repr(r.py), repr(r.theta), repr(r.min_h),
                str(r.path_q), str(r.ref_i), r.qp_status,
            ]) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        if not rows or ",".join(rows[0]) != TRACE_HEADER:
            raise ValueError("not a trace file (header mismatch)")
        recs = []
        for row in rows[1:]:
            vals = [float(x) for x in row[:9]]
            recs.append(TraceRecord(*vals, int(row[9]), int(row[10]), row[11]))
        return cls(recs)


@dataclass
class Metrics:
    qp_failures: int = 0
    safety_pct: float = 100.0
    success_pct: float = 0.0
    v_bar: float = 0.0
    omega_bar: float = 0.0
    e_v: float = 0.0
    e_omega: float = 0.0

    def row(self):
        return [getattr(self, c) for c in METRIC_COLUMNS]


@dataclass
class EpisodeResult:
    trace: Trace
    metrics: Metrics
    outcome: str  # reached | collided | timeout
    step_times: list = field(default_factory=list)
    start: np.ndarray = None

    @property
    def final_position(self):
        r = self.trace.records[-1]
        return np.array([r.px, r.py])


def actuator_step(measured, commanded, dt, limits, bounds=None):
    """Rate-limit each channel toward the command, then clamp to the bounds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    bounds = bounds or InputBounds()
    out = np.empty(2)
    for k in range(2):
        step = limits[k] * dt
        d = float(commanded[k]) - float(measured[k])
        out[k] = float(commanded[k]) if abs(d) <= step else float(measured[k]) + math.copysign(step, d)
    return bounds.clamp(out)


def outcome_of(trace, goal, goal_tol):
    if any(r.min_h <= 0 for r in trace.records):
        return "collided"
    last = trace.records[-1]
    if math.hypot(last.px - goal[0], last.py - goal[1]) <= goal_tol:
        return "reached"
    return "timeout"


def compute_metrics(trace, outcome):
    """Table statistics of one episode from its trace."""
    recs = trace.records
    n = len(recs)
    if n == 0:
        return Metrics()
    return Metrics(
        qp_failures=sum(1 for r in recs if r.qp_status in FAILURE_STATUSES),
        safety_pct=0.0 if any(r.min_h <= 0 for r in recs) else 100.0,
        success_pct=100.0 if outcome == "reached" else 0.0,
        v_bar=sum(abs(r.meas_v) for r in recs) / n,
        omega_bar=sum(abs(r.meas_w) for r in recs) / n,
        e_v=sum(abs(r.cmd_v - r.meas_v) for r in recs) / n,
        e_omega=sum(abs(r.cmd_w - r.meas_w) for r in recs) / n,
    )


def run_episode(sc, controller, lib, params=None, nav_params=None, start=None, on_step=None):
    """Simulate one episode; returns an :class:`EpisodeResult`.

    ``on_step(t, s, diag)`` is called after every control step.
    """
    params = params or FilterParams(sensing_radius=sc.sensing_radius)
    nav_params = nav_params or NavParams(control_period=sc.control_period)
    dt = sc.control_period
    s0 = make_state(*(sc.start if start is None else start))
    s = s0
    meas = np.zeros(2)
    nav = NavigatorState()
    tracks = {o.id: ObstacleTrack() for o in sc.obstacles if o.moving}
    trace = Trace()
    times = []
    n_ticks = int(round(sc.duration / dt))
    outcome = "timeout"
    zero = np.zeros(2)
    for k in range(n_ticks + 1):
        t = k * dt
        world = sc.world_at(t)
        for o in sc.obstacles:
            if o.moving:
                tracks[o.id].record(t, o.reference_point(t))
        mh = min_distance(s[:2], world)
        status = None
        if mh <= 0:
            outcome, status = "collided", "none"
        elif math.hypot(s[0] - sc.goal[0], s[1] - sc.goal[1]) <= nav_params.goal_tol:
            outcome, status = "reached", "hold"
        elif k == n_ticks:
            status = "none"
        final = status is not None
        if not final:
            u, nav, diag = control_step(s, lib, world, tracks, nav, params, nav_params,
                                        controller, now=t)
            times.append(diag.wall_time)
            status = diag.status
            if on_step is not None:
                on_step(t, s, diag)
        else:
            u = zero
        # measured input: what the actuator delivers over [t, t + dt)
        meas = actuator_step(meas, u, dt, sc.accel_limits, params.bounds)
        trace.records.append(TraceRecord(t, float(u[0]), float(u[1]), float(meas[0]),
                                         float(meas[1]), float(s[0]), float(s[1]),
                                         float(s[2]), mh, nav.q, nav.i, status))
        if final:
            break
        s = rk4_step(s, meas, dt)
    metrics = compute_metrics(trace, outcome)
    return EpisodeResult(trace, metrics, outcome, times, s0)


def trial_starts(sc, trials, seed):
    """Seeded start perturbations that stay clear of obstacles."""
    rng = np.random.default_rng(seed)
    world = sc.world_at(0.0)
    starts = []
    dp, dth = sc.start_jitter
    for _ in range(trials):
        while True:
            j = rng.uniform(-1.0, 1.0, size=3) * np.array([dp, dp, dth])
            s = sc.start + j
            if min_distance(s[:2], world) > 0.2 and sc.inside(s):
                break
        starts.append(make_state(*s))
    return starts


def aggregate(results):
    """Failures summed over trials, everything else averaged."""
    ms = [r.metrics for r in results]
    n = len(ms)
    return Metrics(
        qp_failures=sum(m.qp_failures for m in ms),
        safety_pct=sum(m.safety_pct for m in ms) / n,
        success_pct=sum(m.success_pct for m in ms) / n,
        v_bar=sum(m.v_bar for m in ms) / n,
        omega_bar=sum(m.omega_bar for m in ms) / n,
        e_v=sum(m.e_v for m in ms) / n,
        e_omega=sum(m.e_omega for m in ms) / n,
    )


def run_benchmark(sc, lib, controllers=CONTROLLERS, trials=5, seed=0, params=None,
                  nav_params=None):
    """Run every controller from the same seeded starts.

    Returns ``(table, results)`` where ``table`` maps controller name to
    aggregated metrics (sorted by name) and ``results`` maps it to the list of
    per-trial :class:`EpisodeResult`.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    starts = trial_starts(sc, trials, seed)
    results = {}
    for c in sorted(controllers):
        results[c] = [run_episode(sc, c, lib, params, nav_params, s) for s in starts]
    table = {c: aggregate(results[c]) for c in sorted(results)}
    return table, results


def format_table_csv(table):
    lines = ["controller," + ",".join(METRIC_COLUMNS)]
    for c in sorted(table):
        lines.append(c + "," + ",".join(_fmt(v) for v in table[c].row()))
    return "\n".join(lines) + "\n"


def format_table_text(table):
    rows = [["controller", *METRIC_COLUMNS]]
    for c in sorted(table):
        rows.append([c, *(_fmt(v) for v in table[c].row())])
    widths = [max(len(r[k]) for r in rows) for k in range(len(rows[0]))]
    out = []
    for r in rows:
        out.append("  ".join(x.rjust(w) if k else x.ljust(w) for k, (x, w) in enumerate(zip(r, widths))))
    return "\n".join(out) + "\n"


def _fmt(v):
    if isinstance(v, int):
        return str(v)
    return f"{v:.4f}"


# --------------------------------------------------------------------------
# scenario builders
# --------------------------------------------------------------------------

def empty_scenario(goal_distance=6.0, duration=30.0):
    return Scenario("empty", (-2.0, goal_distance + 2.0, -4.0, 4.0), [],
                    make_state(0, 0, 0), make_state(goal_distance, 0, 0), duration=duration)


def concave_desk(x_back=0.8, half_width=1.0, depth=2.0, thickness=0.2, corner=0.05):
    """U-shaped desk made of three rectangles, open toward -x.

    The back wall's inner face is ``x = x_back``; the arms' inner faces are
    ``y = +-half_width`` and reach back to ``x = x_back - depth``.
    """
    x_open = x_back - depth
    back = Rectangle((x_back, -half_width - thickness), (x_back + thickness, half_width + thickness), corner)
    top = Rectangle((x_open, half_width), (x_back + 0.1, half_width + thickness), corner)
    bottom = Rectangle((x_open, -half_width - thickness), (x_back + 0.1, -half_width), corner)
    return Composite((back, top, bottom))


def concave_scenario(goal=(6.0, 0.0, 0.0), duration=40.0):
    """Start inside a U whose back wall blocks the straight line to the goal."""
    desk = Obstacle(concave_desk(), id=0)
    return Scenario("concave", (-3.0, 8.0, -4.0, 4.0), [desk],
                    make_state(0, 0, 0), make_state(*goal), duration=duration)


def human_scenario(duration=30.0):
    """Open floor crossed by a walking person (circle r=0.3 at 0.8 m/s)."""
    script = MotionScript(((3.0, -3.0), (3.0, 3.0), (4.5, 3.0), (4.5, -3.0)), 0.8)
    human = Obstacle(Circle((3.0, -3.0), 0.3), id=1, motion=script)
    return Scenario("human", (-2.0, 8.0, -4.0, 4.0), [human],
                    make_state(0, 0, 0), make_state(6, 0, 0), duration=duration)


SCENARIOS = {"empty": empty_scenario, "concave": concave_scenario, "human": human_scenario}
