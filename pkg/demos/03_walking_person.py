"""A person walks a rectangular loop across the robot's route.

The filter sees the person's velocity through a short track of observed
positions, so its barrier rows account for the approach rate. The robot
yields, lets the person pass and carries on to the goal.

Run from the repository root:  python demos/03_walking_person.py
"""

from lcanav.sim import format_table_text, human_scenario, run_benchmark
from lcanav.trajopt import TrajoptConfig, build_library

sc = human_scenario()
lib = build_library(sc.start, sc.goal, TrajoptConfig())
table, results = run_benchmark(sc, lib, trials=3, seed=1)
print(format_table_text(table))
for c, runs in results.items():
    for k, res in enumerate(runs):
        closest = min(r.min_h for r in res.trace.records)
        print(f"{c} trial {k}: {res.outcome} at t={res.trace.records[-1].t:.1f} s, closest approach {closest:.3f} m")
