"""Column-wise Lasso reference estimator with a per-column BIC choice of penalty."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import solvers
from .errors import ConvergenceWarning, SessError
from .matio import Dataset

GRID_SIZE = 50
GRID_LOW = 1e-3


@dataclass(frozen=True, eq=False)
class ColumnPath:
    omegas: np.ndarray
    bic: np.ndarray
    df: np.ndarray
    best: int


def omega_grid(omega_max: float, size: int = GRID_SIZE, low: float = GRID_LOW) -> np.ndarray:
    """Decreasing log-spaced grid from ``omega_max`` down to ``low * omega_max``."""
    return omega_max * np.logspace(0.0, np.log10(low), size)


def bic(rss: float, df: int, n: int) -> float:
    """``n log(RSS / n) + df log n``; ``inf`` for saturated or exact fits."""
    if df >= n - 1 or not rss > 0:
        return float("inf")
    return float(n * np.log(rss / n) + df * np.log(n))


def lasso_path_bic(y, design: solvers.Design, size: int = GRID_SIZE, low: float = GRID_LOW,
                   tol: float = 1e-8, max_iter: int = 10_000):
    """Warm-started Lasso path for one response; returns ``(u_best, ColumnPath)``."""
    n = design.n
    omega_max = float(np.max(np.abs(design.correlations(y)))) if design.p else 0.0
    u_zero = np.zeros(design.p)
    if not omega_max > 0:
        return u_zero, ColumnPath(np.zeros(1), np.array([np.inf]), np.zeros(1, int), 0)
    omegas = omega_grid(omega_max, size, low)
    crit = np.empty(size)
    dfs = np.empty(size, dtype=int)
    u = u_zero
    best_u, best = u_zero, 0
    best_crit = np.inf
    for i, omega in enumerate(omegas):
        info = solvers.lasso_active_set(y, design, omega, warm_start=u, tol=tol)
        saturated = np.count_nonzero(info.u) >= n - 1
        if info.converged or saturated:
            # saturated fits are excluded by the criterion, so their exact
            # coefficients never matter; the iterate still warm-starts the path
            u = info.u
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                u = solvers.lasso_cd(y, design, solvers.LassoConfig(omega, max_iter, tol), warm_start=u)
        df = int(np.count_nonzero(u))
        rss = float(np.sum((y - design.X @ u) ** 2))
        crit[i], dfs[i] = bic(rss, df, n), df
        if crit[i] < best_crit:
            best_crit, best, best_u = crit[i], i, u.copy()
    return best_u, ColumnPath(omegas, crit, dfs, best)


def lasso_baseline(ds: Dataset, size: int = GRID_SIZE, low: float = GRID_LOW,
                   return_paths: bool = False):
    """Independent Lasso per response column, penalty picked by BIC.

    Works on the standardized scale; the returned ``p x q`` matrix is in the
    same units as ``fit_sess``'s ``C_hat``.
    """
    if not ds.standardized:
        raise SessError("lasso_baseline needs a standardized dataset")
    design = solvers.Design(ds.X)
    if design.use_gram:
        design.gram
    C = np.zeros((ds.p, ds.q))
    paths = []
    for j in range(ds.q):
        C[:, j], path = lasso_path_bic(ds.Y[:, j], design, size, low)
        paths.append(path)
    return (C, paths) if return_paths else C
