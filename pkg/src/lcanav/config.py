"""YAML run configuration: scenario, planner, filter, navigator and bounds.

Every key has a default; unknown keys are rejected with the offending path
in the message. ``dump(load(text))`` reproduces the same :class:`Config`.
"""

from dataclasses import dataclass, field, fields, replace
import math

import yaml

from .dynamics import InputBounds, make_state
from .environment import Circle, Composite, MotionScript, Obstacle, Rectangle
from .navigator import NavParams
from .safety import FilterParams
from .sim import Scenario, concave_scenario, empty_scenario, human_scenario
from .trajopt import TrajoptConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "empty"
    bounds: tuple = (-2.0, 8.0, -4.0, 4.0)
    start: tuple = (0.0, 0.0, 0.0)
    goal: tuple = (6.0, 0.0, 0.0)
    obstacles: tuple = ()
    sensing_radius: float = 3.0
    control_period: float = 0.01
    accel_limits: tuple = (2.0, 4.0)
    duration: float = 30.0
    seed: int = 0
    start_jitter: tuple = (0.15, 0.15)

    def build(self):
        return Scenario(self.name, self.bounds, list(self.obstacles), make_state(*self.start),
                        make_state(*self.goal), self.sensing_radius, self.control_period,
                        self.accel_limits, self.duration, self.seed, self.start_jitter)

    @classmethod
    def from_scenario(cls, sc):
        return cls(sc.name, tuple(float(x) for x in sc.bounds), tuple(float(x) for x in sc.start),
                   tuple(float(x) for x in sc.goal), tuple(sc.obstacles), float(sc.sensing_radius),
                   float(sc.control_period), tuple(float(x) for x in sc.accel_limits),
                   float(sc.duration), int(sc.seed), tuple(float(x) for x in sc.start_jitter))


# filter fields that are set from other sections
_FILTER_DERIVED = ("sensing_radius", "bounds")
_NAV_DERIVED = ("control_period",)


@dataclass(frozen=True)
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    planner: TrajoptConfig = field(default_factory=TrajoptConfig)
    filter: FilterParams = field(default_factory=FilterParams)
    navigator: NavParams = field(default_factory=NavParams)
    bounds: InputBounds = field(default_factory=InputBounds)

    def filter_params(self):
        return replace(self.filter, sensing_radius=self.scenario.sensing_radius, bounds=self.bounds)

    def nav_params(self):
        return replace(self.navigator, control_period=self.scenario.control_period)


def preset(name):
    """Config for one of the bundled scenarios."""
    builders = {"empty": empty_scenario, "concave": concave_scenario, "human": human_scenario}
    if name not in builders:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(builders)}")
    sc = builders[name]()
    cfg = Config(scenario=ScenarioConfig.from_scenario(sc))
    return _normalize(cfg)


def _normalize(cfg):
    # derived filter/nav fields mirror their source sections
    return replace(cfg,
                   filter=replace(cfg.filter, sensing_radius=cfg.scenario.sensing_radius,
                                  bounds=cfg.bounds),
                   navigator=replace(cfg.navigator, control_period=cfg.scenario.control_period))


# --------------------------------------------------------------------------
# obstacles <-> plain data
# --------------------------------------------------------------------------

def _shape_to_data(shape):
    if isinstance(shape, Circle):
        return {"type": "circle", "center": list(shape.center), "radius": shape.radius}
    if isinstance(shape, Rectangle):
        return {"type": "rectangle", "min": list(shape.min_corner), "max": list(shape.max_corner),
                "corner_radius": shape.corner_radius}
    return {"type": "composite", "members": [_shape_to_data(m) for m in shape.members]}


def _obstacle_to_data(obs):
    d = {"id": obs.id, "shape": _shape_to_data(obs.shape)}
    if obs.motion is not None:
        d["motion"] = {"waypoints": [list(w) for w in obs.motion.waypoints],
                       "speed": obs.motion.speed}
    return d


def _vec(v, n, where):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(f"{where}: expected a list of {n} numbers")
    try:
        out = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected numbers") from None
    if not all(math.isfinite(x) for x in out):
        raise ConfigError(f"{where}: values must be finite")
    return out


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key {extra[0]!r}")


def _shape_from_data(d, where):
    _check_keys(d, {"type", "center", "radius", "min", "max", "corner_radius", "members"}, where)
    kind = d.get("type")
    try:
        if kind == "circle":
            _check_keys(d, {"type", "center", "radius"}, where)
            return Circle(_vec(d["center"], 2, where + ".center"), float(d["radius"]))
        if kind == "rectangle":
            _check_keys(d, {"type", "min", "max", "corner_radius"}, where)
            return Rectangle(_vec(d["min"], 2, where + ".min"), _vec(d["max"], 2, where + ".max"),
                             float(d.get("corner_radius", 0.05)))
        if kind == "composite":
            _check_keys(d, {"type", "members"}, where)
            return Composite(tuple(_shape_from_data(m, f"{where}.members[{k}]")
                                   for k, m in enumerate(d["members"])))
    except KeyError as e:
        raise ConfigError(f"{where}: missing key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{where}: {e}") from None
    raise ConfigError(f"{where}.type: expected circle, rectangle or composite, got {kind!r}")


def _obstacle_from_data(d, where):
    _check_keys(d, {"id", "shape", "motion"}, where)
    if "shape" not in d:
        raise ConfigError(f"{where}: missing key 'shape'")
    shape = _shape_from_data(d["shape"], where + ".shape")
    motion = None
    if d.get("motion") is not None:
        m = d["motion"]
        _check_keys(m, {"waypoints", "speed"}, where + ".motion")
        try:
            motion = MotionScript(tuple(_vec(w, 2, where + ".motion.waypoints") for w in m["waypoints"]),
                                  float(m["speed"]))
        except KeyError as e:
            raise ConfigError(f"{where}.motion: missing key {e.args[0]!r}") from None
        except ValueError as e:
            raise ConfigError(f"{where}.motion: {e}") from None
    return Obstacle(shape, int(d.get("id", 0)), motion)


# --------------------------------------------------------------------------
# sections
# --------------------------------------------------------------------------

def _coerce(value, default, where):
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}: expected true/false")
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"{where}: expected an integer")
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise ConfigError(f"{where}: expected a number")
            return float(value)
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number") from None
    return value


def _load_section(cls, data, where, skip=(), special=None):
    special = special or {}
    base = cls()
    names = [f.name for f in fields(cls) if f.name not in skip]
    data = data or {}
    _check_keys(data, names, where)
    kw = {}
    for name in names:
        if name not in data:
            continue
        if name in special:
            kw[name] = special[name](data[name], f"{where}.{name}")
        else:
            kw[name] = _coerce(data[name], getattr(base, name), f"{where}.{name}")
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def _overrides_from_data(v, where):
    if not isinstance(v, list):
        raise ConfigError(f"{where}: expected a list")
    out = {}
    for k, item in enumerate(v):
        w = f"{where}[{k}]"
        _check_keys(item, {"path", "waypoint", "point"}, w)
        try:
            out[(int(item["path"]), int(item["waypoint"]))] = _vec(item["point"], 2, w + ".point")
        except KeyError as e:
            raise ConfigError(f"{w}: missing key {e.args[0]!r}") from None
    return out


def from_dict(data):
    if data is None:
        data = {}
    _check_keys(data, {"scenario", "planner", "filter", "navigator", "bounds"}, "config")
    bounds = _load_section(InputBounds, data.get("bounds"), "bounds")
    sc_special = {
        "bounds": lambda v, w: _vec(v, 4, w),
        "start": lambda v, w: _vec(v, 3, w),
        "goal": lambda v, w: _vec(v, 3, w),
        "accel_limits": lambda v, w: _vec(v, 2, w),
        "start_jitter": lambda v, w: _vec(v, 2, w),
        "obstacles": lambda v, w: tuple(_obstacle_from_data(o, f"{w}[{k}]") for k, o in enumerate(v or [])),
    }
    scenario = _load_section(ScenarioConfig, data.get("scenario"), "scenario", special=sc_special)
    if scenario.control_period <= 0 or scenario.duration <= 0 or scenario.sensing_radius <= 0:
        raise ConfigError("scenario: control_period, duration and sensing_radius must be positive")
    planner = _load_section(TrajoptConfig, data.get("planner"), "planner",
                            special={"overrides": _overrides_from_data})
    if planner.T < 1 or planner.Ts <= 0:
        raise ConfigError("planner: T must be >= 1 and Ts > 0")
    try:
        planner.waypoint_indices()
    except ValueError as e:
        raise ConfigError(f"planner: {e}") from None
    filt = _load_section(FilterParams, data.get("filter"), "filter", skip=_FILTER_DERIVED)
    nav = _load_section(NavParams, data.get("navigator"), "navigator", skip=_NAV_DERIVED)
    if nav.progress not in ("clock", "proximity"):
        raise ConfigError("navigator.progress: expected 'clock' or 'proximity'")
    return _normalize(Config(scenario, planner, filt, nav, bounds))


def to_dict(cfg):
    def section(obj, skip=(), special=None):
        special = special or {}
        out = {}
        for f in fields(obj):
            if f.name in skip:
                continue
            v = getattr(obj, f.name)
            out[f.name] = special[f.name](v) if f.name in special else (list(v) if isinstance(v, tuple) else v)
        return out

    sc = section(cfg.scenario, special={"obstacles": lambda obs: [_obstacle_to_data(o) for o in obs]})
    planner = section(cfg.planner, special={"overrides": lambda ov: [
        {"path": p, "waypoint": k, "point": list(xy)} for (p, k), xy in sorted(ov.items())]})
    return {
        "scenario": sc,
        "planner": planner,
        "filter": section(cfg.filter, skip=_FILTER_DERIVED),
        "navigator": section(cfg.navigator, skip=_NAV_DERIVED),
        "bounds": section(cfg.bounds),
    }


def loads(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from None
    return from_dict(data)


class _Dumper(yaml.SafeDumper):
    pass


def _represent_list(dumper, data):
    # short numeric vectors inline, nested structures as blocks
    flow = all(not isinstance(x, (list, dict)) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_Dumper.add_representer(list, _represent_list)


def dumps(cfg):
    return yaml.dump(to_dict(cfg), Dumper=_Dumper, sort_keys=False, default_flow_style=False)


def load(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return loads(text)


def save(cfg, path):
    with open(path, "w") as f:
        f.write(dumps(cfg))
