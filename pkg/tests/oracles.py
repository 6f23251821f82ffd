"""Independent reference solvers used by the tests."""

from itertools import combinations

import numpy as np


def random_qp(rng, m=None, feasible=True):
    """Random 2-variable projection QP ``min |u - u0|^2 s.t. A u >= b``."""
    m = int(rng.integers(1, 9)) if m is None else m
    A = rng.normal(size=(m, 2))
    xf = rng.uniform(-1, 1, 2)
    b = A @ xf - rng.exponential(0.3, m)
    if not feasible:
        # a row and its flipped copy with a gap cannot both hold
        A = np.vstack([A, A[:1], -A[:1]])
        b = np.append(b, [A[0] @ xf + 1.0, -(A[0] @ xf) + 1.0])
    u0 = rng.uniform(-3, 3, 2)
    return u0, A, b, xf


def brute_force_qp(u0, A, b, xf, n_grid=151, zoom_levels=5):
    """Grid search over a box that must contain the optimum, zoom, then polish.

    Each zoom level re-grids a box of 20 spacings around the current winner.
    The polish projects ``u0`` onto every affine set spanned by at most two
    rows nearly tight at the winner and keeps the best feasible candidate
    (including the grid point itself).
    """
    rad = np.linalg.norm(u0 - xf) + 1e-9  # optimum lies within this distance of u0
    best, best_cost = xf, float(np.sum((xf - u0) ** 2))
    center, half = u0, rad
    coarse = 2 * rad / (n_grid - 1)
    for _ in range(zoom_levels):
        g = np.linspace(-half, half, n_grid)
        X, Y = np.meshgrid(center[0] + g, center[1] + g)
        P = np.c_[X.ravel(), Y.ravel()]
        P = P[np.all(P @ A.T - b >= 0, axis=1)]
        if len(P):
            cost = np.sum((P - u0) ** 2, axis=1)
            k = int(np.argmin(cost))
            if cost[k] < best_cost:
                best, best_cost = P[k], float(cost[k])
        center, half = best, 20 * (2 * half / (n_grid - 1))
    slack = A @ best - b
    near = [i for i in range(len(b)) if slack[i] <= 10 * coarse * np.linalg.norm(A[i]) + 1e-12]
    for k in (1, 2):
        for S in combinations(near, k):
            As, bs = A[list(S)], b[list(S)]
            # min |x - u0|^2 s.t. As x = bs
            lam, *_ = np.linalg.lstsq(As @ As.T, bs - As @ u0, rcond=None)
            x = u0 + As.T @ lam
            if np.all(A @ x - b >= -1e-10):
                c = float(np.sum((x - u0) ** 2))
                if c < best_cost:
                    best, best_cost = x, c
    return best, best_cost


def kkt_residual(u, u0, A, b, tol=1e-8):
    """Max KKT violation for ``min |u - u0|^2 s.t. A u >= b`` (multipliers by NNLS-like lstsq)."""
    slack = A @ u - b
    act = np.flatnonzero(np.abs(slack) <= tol * np.maximum(1, np.abs(b)))
    grad = 2 * (u - u0)
    if len(act) == 0:
        return max(float(np.max(np.abs(grad))), float(max(0.0, -np.min(slack))))
    lam, *_ = np.linalg.lstsq(A[act].T, grad, rcond=None)
    stat = float(np.max(np.abs(A[act].T @ lam - grad)))
    dual = float(max(0.0, -np.min(lam)))
    prim = float(max(0.0, -np.min(slack)))
    return max(stat, dual, prim)


def dense_lq(A_seq, B_seq, c_seq, d_seq, x0):
    """Dense least-squares solution of the tracking LQ problem.

    min 1/2 sum_i |x_i + c_i|^2 + 1/2 sum_i |u_i + d_i|^2, x_{i+1} = A_i x_i + B_i u_i,
    with ``x_0`` fixed. Returns ``(u, x, cost)``.
    """
    T, n, m = B_seq.shape
    # x = F x0 + G u (stacked x_0..x_T)
    F = np.zeros(((T + 1) * n, n))
    G = np.zeros(((T + 1) * n, T * m))
    F[:n] = np.eye(n)
    for i in range(T):
        F[(i + 1) * n:(i + 2) * n] = A_seq[i] @ F[i * n:(i + 1) * n]
        G[(i + 1) * n:(i + 2) * n] = A_seq[i] @ G[i * n:(i + 1) * n]
        G[(i + 1) * n:(i + 2) * n, i * m:(i + 1) * m] += B_seq[i]
    c = np.asarray(c_seq).ravel()
    d = np.asarray(d_seq).ravel()
    M = np.vstack([G, np.eye(T * m)])
    r = -np.concatenate([F @ x0 + c, d])
    u, *_ = np.linalg.lstsq(M, r, rcond=None)
    x = F @ x0 + G @ u
    cost = 0.5 * float(np.sum((x + c) ** 2) + np.sum((u + d) ** 2))
    return u.reshape(T, m), x.reshape(T + 1, n), cost


def kkt_lq(A_seq, B_seq, c_seq, d_seq, x0):
    """Same LQ problem as :func:`dense_lq`, solved as one equality-constrained
    least-squares KKT system over all states and inputs."""
    T, n, m = B_seq.shape
    nx, nu = (T + 1) * n, T * m
    N = nx + nu
    H = np.eye(N)
    g = np.concatenate([np.asarray(c_seq).ravel(), np.asarray(d_seq).ravel()])
    # constraints: x_0 = x0, x_{i+1} - A x_i - B u_i = 0
    E = np.zeros(((T + 1) * n, N))
    f = np.zeros((T + 1) * n)
    E[:n, :n] = np.eye(n)
    f[:n] = x0
    for i in range(T):
        r = (i + 1) * n
        E[r:r + n, r:r + n] = np.eye(n)
        E[r:r + n, i * n:(i + 1) * n] = -A_seq[i]
        E[r:r + n, nx + i * m:nx + (i + 1) * m] = -B_seq[i]
    K = np.block([[H, E.T], [E, np.zeros((E.shape[0], E.shape[0]))]])
    sol = np.linalg.solve(K, np.concatenate([-g, f]))
    z = sol[:N]
    return z[nx:].reshape(T, m), z[:nx].reshape(T + 1, n)
