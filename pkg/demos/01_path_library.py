"""Offline layer: plan the five-path fan and look at what the library holds.

Run from the repository root:  python demos/01_path_library.py
"""

import numpy as np

from lcanav.dynamics import make_state
from lcanav.trajopt import TrajoptConfig, build_library

start, goal = make_state(0, 0, 0), make_state(6, 0, 0)
cfg = TrajoptConfig()
lib = build_library(start, goal, cfg)

print(f"{len(lib)} paths, horizon T={lib.T}, Ts={lib.Ts} s, lateral spacing {lib.delta} m\n")
for e in lib.entries:
    mid = e.x_star[lib.T // 2]
    print(f"path {e.path_index}: offset {e.offset:+.1f} m, {e.iterations:3d} ADMM iterations, "
          f"waypoint hit at ({mid[0]:.3f}, {mid[1]:+.3f}), peak speed {e.mu_star[:, 0].max():.2f} m/s")

# A coarse character plot of the fan: each path is drawn with its index.
W, H = 61, 17
canvas = [[" "] * W for _ in range(H)]
for e in lib.entries:
    for x, y, _ in e.x_star:
        col = int(round(x / 6.0 * (W - 1)))
        row = int(round((2.0 - y) / 4.0 * (H - 1)))
        if 0 <= row < H and 0 <= col < W:
            canvas[row][col] = str(e.path_index)
print("\n" + "\n".join("".join(r) for r in canvas))

# The per-step gains are what the online layer uses for feedback.
K = lib.entries[2].K_star
print(f"\ncenter path feedback gain at step 0:\n{np.array2string(K[0], precision=3)}")
