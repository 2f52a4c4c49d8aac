"""Independent reference solvers used only by the tests."""

import numpy as np


def lasso_value(u, z, X, omega):
    r = z - X @ u
    return r @ r / (2 * X.shape[0]) + omega * np.abs(u).sum()


def fista(z, X, omega, iters=200_000, tol=1e-16):
    """Accelerated proximal gradient for ||z - Xu||^2/(2n) + omega ||u||_1."""
    n, p = X.shape
    L = np.linalg.eigvalsh(X.T @ X / n)[-1]
    u = np.zeros(p)
    y = u.copy()
    t = 1.0
    prev = lasso_value(u, z, X, omega)
    for k in range(iters):
        g = X.T @ (X @ y - z) / n
        w = y - g / L
        u_new = np.sign(w) * np.maximum(np.abs(w) - omega / L, 0.0)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = u_new + (t - 1) / t_new * (u_new - u)
        u, t = u_new, t_new
        if k % 50 == 0:
            val = lasso_value(u, z, X, omega)
            if abs(prev - val) <= tol * max(1.0, abs(val)) and k > 500:
                break
            prev = val
    return u


def scaled_value(u, sigma, z, X, omega0):
    r = z - X @ u
    return r @ r / (2 * X.shape[0] * sigma) + sigma / 2 + omega0 * np.abs(u).sum()


def scaled_lasso_grid(z, X, omega0, floor=1e-6, rounds=6, points=25):
    """Minimize the profile ``h(s) = lasso_value(s * omega0) / s + s / 2`` by grid refinement."""
    n = X.shape[0]

    def profile(s):
        u = fista(z, X, s * omega0, iters=20_000, tol=1e-14)
        return lasso_value(u, z, X, s * omega0) / s + s / 2

    lo, hi = floor, max(np.linalg.norm(z) / np.sqrt(n), 2 * floor)
    best = None
    for _ in range(rounds):
        grid = np.linspace(lo, hi, points)
        vals = [profile(s) for s in grid]
        i = int(np.argmin(vals))
        best = (grid[i], vals[i])
        step = grid[1] - grid[0]
        lo, hi = max(floor, grid[i] - step), grid[i] + step
    return best
