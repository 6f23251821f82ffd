"""Versioned JSON serialization of a :class:`PathLibrary`.

Arrays are stored flat (gains row-major, 2x3 per step). Python's float repr
round-trips exactly, so ``read(write(lib))`` reproduces every value.
Non-finite residuals are written as ``null``.
"""

import json
import math

import numpy as np

from .trajopt import PathEntry, PathLibrary

FORMAT = "lcanav-path-library"
VERSION = 1


class LibraryFormatError(ValueError):
    pass


def _f(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _flat(a):
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def library_to_dict(lib):
    return {
        "format": FORMAT,
        "version": VERSION,
        "Ts": float(lib.Ts),
        "T": int(lib.T),
        "delta": float(lib.delta),
        "center_path_index": int(lib.center_path_index),
        "start": _flat(lib.start),
        "goal": _flat(lib.goal),
        "entries": [
            {
                "path_index": int(e.path_index),
                "converged": bool(e.converged),
                "primal_res": _f(e.primal_res),
                "dual_res": _f(e.dual_res),
                "offset": float(e.offset),
                "iterations": int(e.iterations),
                "wall_time": float(e.wall_time),
                "waypoints": _flat(e.waypoints),
                "mu_star": _flat(e.mu_star),
                "K_star": _flat(e.K_star),
                "x_star": _flat(e.x_star),
            }
            for e in lib.entries
        ],
    }


def _arr(d, key, shape):
    a = np.array(d[key], dtype=float)
    if a.size != int(np.prod(shape)):
        raise LibraryFormatError(f"entry field {key!r} has {a.size} values, expected {shape}")
    return a.reshape(shape)


def library_from_dict(d):
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise LibraryFormatError("not a path library file")
    if d.get("version") != VERSION:
        raise LibraryFormatError(f"unsupported library version {d.get('version')!r}")
    try:
        T = int(d["T"])
        entries = []
        for e in d["entries"]:
            wp = np.array(e["waypoints"], dtype=float).reshape(-1, 2)
            entries.append(PathEntry(
                path_index=int(e["path_index"]),
                mu_star=_arr(e, "mu_star", (T, 2)),
                K_star=_arr(e, "K_star", (T, 2, 3)),
                x_star=_arr(e, "x_star", (T + 1, 3)),
                converged=bool(e["converged"]),
                primal_res=math.inf if e["primal_res"] is None else float(e["primal_res"]),
                dual_res=math.inf if e["dual_res"] is None else float(e["dual_res"]),
                waypoints=wp,
                offset=float(e["offset"]),
                iterations=int(e["iterations"]),
                wall_time=float(e["wall_time"]),
            ))
        return PathLibrary(entries, float(d["delta"]), float(d["Ts"]), T,
                           int(d["center_path_index"]), np.array(d["start"], dtype=float),
                           np.array(d["goal"], dtype=float))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, LibraryFormatError):
            raise
        raise LibraryFormatError(f"malformed library: {e!r}") from None


def write_library(lib, path):
    with open(path, "w") as f:
        json.dump(library_to_dict(lib), f, indent=1)
        f.write("\n")


def read_library(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise LibraryFormatError(f"cannot read library {path}: {e}") from None
    return library_from_dict(data)


def libraries_equal(a, b):
    """Exact (bitwise-value) equality of two libraries."""
    if (a.Ts, a.T, a.delta, a.center_path_index) != (b.Ts, b.T, b.delta, b.center_path_index):
        return False
    if not (np.array_equal(a.start, b.start) and np.array_equal(a.goal, b.goal)):
        return False
    if len(a.entries) != len(b.entries):
        return False
    for x, y in zip(a.entries, b.entries):
        if (x.path_index, x.converged, x.offset, x.iterations) != (y.path_index, y.converged, y.offset, y.iterations):
            return False
        if not (x.primal_res == y.primal_res and x.dual_res == y.dual_res and x.wall_time == y.wall_time):
            return False
        for name in ("mu_star", "K_star", "x_star", "waypoints"):
            if not np.array_equal(getattr(x, name), getattr(y, name)):
                return False
    return True
