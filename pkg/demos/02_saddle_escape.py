"""Starting inside a U-shaped desk whose back wall blocks the way to the goal.

The plain CBF filter keeps the robot safe but parks it facing the back wall,
where the nominal pull toward the goal and the barrier cancel. The manifold
constraint keeps a minimum speed along the boundary, so the robot slides
along the wall, leaves the U and rejoins a library path.

Run from the repository root:  python demos/02_saddle_escape.py
"""

import numpy as np

from lcanav.sim import concave_scenario, run_episode
from lcanav.trajopt import TrajoptConfig, build_library

sc = concave_scenario()
lib = build_library(sc.start, sc.goal, TrajoptConfig())

for controller in ("cbf", "mcbf"):
    res = run_episode(sc, controller, lib)
    recs = res.trace.records
    end = res.final_position
    min_h = min(r.min_h for r in recs)
    print(f"{controller:>4}: {res.outcome} after {recs[-1].t:.1f} s, "
          f"final position ({end[0]:.2f}, {end[1]:.2f}), "
          f"{np.hypot(*(end - sc.goal[:2])):.2f} m from goal, closest approach {min_h:.3f} m")
    # where did the robot spend its time?
    for t_probe in (2.0, 5.0, 10.0, 20.0):
        k = min(int(t_probe / sc.control_period), len(recs) - 1)
        r = recs[k]
        print(f"      t={r.t:5.1f}s  p=({r.px:+.2f}, {r.py:+.2f})  v={r.meas_v:.2f}  path {r.path_q}  {r.qp_status}")
