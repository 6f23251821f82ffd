"""Exact projection onto a small polyhedron by active-set enumeration.

Solves ``min |x - x0|^2  s.t.  A x >= b`` for ``n <= 3`` variables. The
optimum is the projection of ``x0`` onto the affine hull of its (at most
``n`` linearly independent) active constraints, so evaluating every such
projection and keeping the cheapest feasible one is exact.
"""

from dataclasses import dataclass, field
from itertools import combinations
import time

import numpy as np

FEAS_TOL = 1e-10


@dataclass
class LinearConstraint:
    """``a . u >= b`` on the input ``u = (v, omega)``."""

    a: np.ndarray
    b: float
    kind: str = "barrier"  # "barrier" | "manifold"
    obstacle_id: int = -1


@dataclass
class QPSolution:
    u: np.ndarray | None
    status: str  # "optimal" | "infeasible"
    active_set: list = field(default_factory=list)
    solve_time: float = 0.0

    @property
    def optimal(self):
        return self.status == "optimal"


_SUBSETS = {}


def _subsets(m, n):
    key = (m, n)
    if key not in _SUBSETS:
        _SUBSETS[key] = [
            np.array(list(combinations(range(m), k)), dtype=int).reshape(-1, k)
            for k in range(1, min(n, m) + 1)
        ]
    return _SUBSETS[key]


def _tight(A, b, x):
    tight = np.abs(A @ x - b) <= 1e-8 * np.maximum(1.0, np.abs(b))
    return [int(i) for i in np.flatnonzero(tight)]


def _kkt_2d(x0, rows, bs, slack, scale):
    """First KKT point over singles then pairs, in plain floats.

    A candidate with nonnegative multipliers that satisfies every row is the
    unique optimum of the strictly convex problem, so the search can stop
    there. Returns None when rounding rejects every candidate.
    """
    m = len(rows)
    px, py = x0

    def feasible(x, y):
        for (a0, a1), bi, sc in zip(rows, bs, scale):
            if a0 * x + a1 * y - bi < -sc:
                return False
        return True

    for i in range(m):
        if slack[i] >= 0.0:
            continue  # a satisfied row cannot carry a positive multiplier alone
        a0, a1 = rows[i]
        nn = a0 * a0 + a1 * a1
        if nn <= 1e-300:
            continue
        lam = -slack[i] / nn
        x, y = px + lam * a0, py + lam * a1
        if feasible(x, y):
            return x, y
    for i in range(m):
        ai0, ai1 = rows[i]
        gii = ai0 * ai0 + ai1 * ai1
        for j in range(i + 1, m):
            aj0, aj1 = rows[j]
            gjj = aj0 * aj0 + aj1 * aj1
            gij = ai0 * aj0 + ai1 * aj1
            det = gii * gjj - gij * gij
            if det <= 1e-12 * gii * gjj:
                continue
            ri, rj = -slack[i], -slack[j]
            li = (gjj * ri - gij * rj) / det
            lj = (gii * rj - gij * ri) / det
            if li < 0.0 or lj < 0.0:
                continue
            x = px + li * ai0 + lj * aj0
            y = py + li * ai1 + lj * aj1
            if feasible(x, y):
                return x, y
    return None


def project_polyhedron(x0, A, b, tol=FEAS_TOL):
    """Return ``(x, active)`` or ``(None, [])`` when no candidate is feasible."""
    x0 = np.asarray(x0, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, x0.size)
    b = np.asarray(b, dtype=float).reshape(-1)
    m, n = A.shape
    if m == 0:
        return x0.copy(), []
    scale = tol * np.maximum(1.0, np.abs(b))
    slack0 = A @ x0 - b
    if np.all(slack0 >= 0.0):
        return x0, []
    if n == 2:
        xy = _kkt_2d(x0.tolist(), A.tolist(), b.tolist(), slack0.tolist(), scale.tolist())
        if xy is not None:
            x = np.array(xy)
            return x, _tight(A, b, x)
    best_x, best_cost, best_S = None, np.inf, None
    for S in _subsets(m, n):
        As = A[S]  # (K, k, n)
        G = As @ np.swapaxes(As, 1, 2)  # (K, k, k)
        k = S.shape[1]
        if k == 1:
            det = G[:, 0, 0]
        else:
            det = np.linalg.det(G)
        norms = np.prod(np.einsum("kij,kij->ki", As, As), axis=1)
        ok = det > 1e-12 * np.maximum(norms, 1e-300)
        if not np.any(ok):
            continue
        G = np.where(ok[:, None, None], G, np.eye(k))
        rhs = -slack0[S]  # b_S - A_S x0
        lam = np.linalg.solve(G, rhs[..., None])[..., 0]
        X = x0 + np.einsum("kin,ki->kn", As, lam)
        feas = np.all(X @ A.T - b >= -scale, axis=1) & ok
        if not np.any(feas):
            continue
        cost = np.sum((X - x0) ** 2, axis=1)
        cost = np.where(feas, cost, np.inf)
        j = int(np.argmin(cost))
        if cost[j] < best_cost:
            best_x, best_cost, best_S = X[j], cost[j], S[j]
    if best_x is None:
        return None, []
    return best_x, _tight(A, b, best_x)


def solve_qp(u_nom, constraints):
    """Minimize ``|u - u_nom|^2`` subject to a list of :class:`LinearConstraint`.

    A feasible ``u_nom`` is returned unchanged (same values, empty active set).
    """
    t0 = time.perf_counter()
    u_nom = np.asarray(u_nom, dtype=float)
    if not constraints:
        return QPSolution(u_nom, "optimal", [], time.perf_counter() - t0)
    A = np.array([c.a for c in constraints], dtype=float)
    b = np.array([c.b for c in constraints], dtype=float)
    x, active = project_polyhedron(u_nom, A, b)
    if x is None:
        return QPSolution(None, "infeasible", [], time.perf_counter() - t0)
    return QPSolution(x, "optimal", active, time.perf_counter() - t0)


def solve_qp_with_slack(u_nom, constraints, penalty=1e6):
    """Barrier constraints softened by one shared slack ``z >= 0``.

    Minimizes ``|u - u_nom|^2 + penalty * z^2`` s.t. ``a.u + z >= b``; in the
    scaled variable ``s = sqrt(penalty) z`` this is again a projection.
    Always feasible.
    """
    t0 = time.perf_counter()
    u_nom = np.asarray(u_nom, dtype=float)
    k = 1.0 / np.sqrt(penalty)
    rows = [np.append(np.asarray(c.a, dtype=float), k) for c in constraints]
    rows.append(np.array([0.0, 0.0, 1.0]))
    b = [c.b for c in constraints] + [0.0]
    x, active = project_polyhedron(np.append(u_nom, 0.0), np.array(rows), np.array(b))
    if x is None:  # cannot happen for finite data; keep the command defined
        return QPSolution(u_nom.copy(), "infeasible", [], time.perf_counter() - t0), 0.0
    return QPSolution(x[:2], "optimal", [i for i in active if i < len(constraints)],
                      time.perf_counter() - t0), float(x[2] * k)
