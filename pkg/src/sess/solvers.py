"""Single-response sparse regression: coordinate-descent Lasso and scaled Lasso.

Both solvers assume a design whose columns have L2-norm ``sqrt(n)``.  The Lasso
objective is ``||z - X u||^2 / (2n) + omega * ||u||_1``; the scaled Lasso
minimizes ``||z - X u||^2 / (2 n sigma) + sigma / 2 + omega0 * ||u||_1``
jointly over ``(u, sigma)`` by alternating a closed-form ``sigma`` step with a
Lasso solve at penalty ``sigma * omega0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import optimize

from .errors import ConvergenceWarning, DimensionError, NonFinite, NotStandardized

NORM_RTOL = 1e-6
# Gram matrices above this many predictors cost too much memory; fall back to
# residual ("naive") updates.
GRAM_MAX_P = 4000

# ``omega0 >= 1`` always returns ``u = 0`` on a standardized design, because
# ``|X_j' z| / n <= ||z|| / sqrt(n)``.  The default sits at the correlation
# level a pure-noise response reaches with the columns.
DEFAULT_OMEGA0 = None


def default_omega0(n: int, p: int) -> float:
    """Universal penalty level ``sqrt(log(p) / n)`` (``log`` floored at 1)."""
    if n < 1 or p < 1:
        raise ValueError(f"need n, p >= 1, got n={n}, p={p}")
    return float(np.sqrt(max(np.log(p), 1.0) / n))
ALTERNATIONS_BEFORE_BRACKETING = 10
CD_CHUNK = 50


@dataclass(frozen=True)
class LassoConfig:
    omega: float
    max_iter: int = 10_000
    tol: float = 1e-8

    def __post_init__(self):
        if not self.omega >= 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class ScaledLassoOptions:
    tol: float = 1e-8
    max_iter: int = 10_000
    tol_sigma: float = 1e-8
    max_outer: int = 100
    sigma_floor: float = 1e-6


@dataclass
class LassoInfo:
    u: np.ndarray
    iters: int
    converged: bool
    objective: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class ScaledLassoResult:
    u_hat: np.ndarray
    sigma_hat: float
    omega_eff: float
    iters: int
    converged: bool
    degenerate: bool = False


@dataclass(frozen=True)
class KKTReport:
    max_violation_inactive: float
    max_violation_active: float
    passes: bool


class Design:
    """A standardized design matrix with cached quantities for repeated solves.

    Building one validates the column norms once; the Gram matrix ``X'X / n``
    is formed lazily and only when ``p`` is small enough.
    """

    def __init__(self, X, check=True):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DimensionError("X must be a 2-D array")
        if not np.isfinite(X).all():
            raise NonFinite("X contains NaN/Inf entries")
        self.n, self.p = X.shape
        if check:
            root_n = np.sqrt(self.n)
            dev = np.abs(np.linalg.norm(X, axis=0) - root_n)
            bad = np.flatnonzero(dev > NORM_RTOL * root_n)
            if bad.size:
                raise NotStandardized(
                    f"column {bad[0]} has norm {np.linalg.norm(X[:, bad[0]]):.6g}, "
                    f"expected sqrt(n) = {root_n:.6g}"
                )
        self.X = X
        self.Xt = np.ascontiguousarray(X.T)
        self.col_sq = np.einsum("ij,ij->j", X, X) / self.n
        self._gram = None

    @property
    def use_gram(self) -> bool:
        return self.p <= GRAM_MAX_P

    @property
    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = np.ascontiguousarray(self.Xt @ self.X) / self.n
        return self._gram

    def correlations(self, z) -> np.ndarray:
        return self.Xt @ z / self.n


def as_design(X) -> Design:
    return X if isinstance(X, Design) else Design(X)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(u, z, X, omega) -> float:
    X = X.X if isinstance(X, Design) else np.asarray(X, float)
    r = z - X @ u
    return float(r @ r / (2 * X.shape[0]) + omega * np.abs(u).sum())


@njit(cache=True, nogil=True)
def _kkt_violation(g, u, omega):
    worst = 0.0
    for j in range(u.shape[0]):
        if u[j] == 0.0:
            v = abs(g[j]) - omega
        elif u[j] > 0.0:
            v = abs(g[j] - omega)
        else:
            v = abs(g[j] + omega)
        if v > worst:
            worst = v
    return worst


@njit(cache=True, nogil=True)
def _objective(zz, b, g, u, omega):
    # ||z - Xu||^2/(2n) = zz/2 - b'u + u'Gu/2 and Gu = b - g
    s = 0.0
    l1 = 0.0
    for j in range(u.shape[0]):
        s += (b[j] + g[j]) * u[j]
        l1 += abs(u[j])
    return 0.5 * zz - 0.5 * s + omega * l1


@njit(cache=True, nogil=True)
def _cd_gram(G, diag, b, zz, u, omega, tol, max_iter, hist):
    """Cyclic coordinate descent with covariance updates.

    ``g = b - G u`` is kept current.  Full sweeps alternate with sweeps over the
    active set; termination needs a full sweep whose largest coefficient move
    is below ``tol`` and a KKT residual below ``tol``.
    """
    p = u.shape[0]
    g = b - G @ u
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        # full sweep
        dmax = 0.0
        for j in range(p):
            old = u[j]
            rho = g[j] + diag[j] * old
            if rho > omega:
                new = (rho - omega) / diag[j]
            elif rho < -omega:
                new = (rho + omega) / diag[j]
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                u[j] = new
                Gj = G[j]
                for k in range(p):
                    g[k] -= d * Gj[k]
                if abs(d) > dmax:
                    dmax = abs(d)
        hist[sweeps] = _objective(zz, b, g, u, omega)
        sweeps += 1
        if dmax <= tol:
            g = b - G @ u
            if _kkt_violation(g, u, omega) <= tol:
                converged = True
                break
            continue
        # active-set sweeps
        active = np.flatnonzero(u)
        while sweeps < max_iter:
            dmax = 0.0
            for j in active:
                old = u[j]
                rho = g[j] + diag[j] * old
                if rho > omega:
                    new = (rho - omega) / diag[j]
                elif rho < -omega:
                    new = (rho + omega) / diag[j]
                else:
                    new = 0.0
                d = new - old
                if d != 0.0:
                    u[j] = new
                    Gj = G[j]
                    for k in range(p):
                        g[k] -= d * Gj[k]
                    if abs(d) > dmax:
                        dmax = abs(d)
            hist[sweeps] = _objective(zz, b, g, u, omega)
            sweeps += 1
            if dmax <= tol:
                break
    return sweeps, converged


@njit(cache=True, nogil=True)
def _cd_naive(Xt, diag, z, u, omega, tol, max_iter, hist):
    """Same scheme as :func:`_cd_gram` but maintaining the residual ``r = z - Xu``."""
    p, n = Xt.shape
    r = z.copy()
    for j in range(p):
        if u[j] != 0.0:
            r -= u[j] * Xt[j]
    b = Xt @ z / n
    zz = (z @ z) / n
    g = np.empty(p)
    sweeps = 0
    converged = False
    while sweeps < max_iter:
        dmax = 0.0
        for j in range(p):
            old = u[j]
            xj = Xt[j]
            rho = (xj @ r) / n + diag[j] * old
            if rho > omega:
                new = (rho - omega) / diag[j]
            elif rho < -omega:
                new = (rho + omega) / diag[j]
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                u[j] = new
                for i in range(n):
                    r[i] -= d * xj[i]
                if abs(d) > dmax:
                    dmax = abs(d)
        for j in range(p):
            g[j] = (Xt[j] @ r) / n
        hist[sweeps] = _objective(zz, b, g, u, omega)
        sweeps += 1
        if dmax <= tol:
            if _kkt_violation(g, u, omega) <= tol:
                converged = True
                break
            continue
        active = np.flatnonzero(u)
        while sweeps < max_iter:
            dmax = 0.0
            for j in active:
                old = u[j]
                xj = Xt[j]
                rho = (xj @ r) / n + diag[j] * old
                if rho > omega:
                    new = (rho - omega) / diag[j]
                elif rho < -omega:
                    new = (rho + omega) / diag[j]
                else:
                    new = 0.0
                d = new - old
                if d != 0.0:
                    u[j] = new
                    for i in range(n):
                        r[i] -= d * xj[i]
                    if abs(d) > dmax:
                        dmax = abs(d)
            for j in range(p):
                g[j] = (Xt[j] @ r) / n
            hist[sweeps] = _objective(zz, b, g, u, omega)
            sweeps += 1
            if dmax <= tol:
                break
    return sweeps, converged


def _active_solve(design: Design, z, u, omega):
    """Exact minimizer on the active set of ``u`` with its signs held fixed.

    Returns ``None`` when the system is singular or a sign flips.
    """
    active = np.flatnonzero(u)
    if active.size == 0 or active.size >= design.n:
        return None
    XA = design.X[:, active]
    GA = XA.T @ XA / design.n
    rhs = XA.T @ z / design.n - omega * np.sign(u[active])
    try:
        uA = np.linalg.solve(GA, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.sign(uA) == np.sign(u[active])):
        return None
    cand = np.zeros_like(u)
    cand[active] = uA
    return cand


def _polish(design: Design, z, u, omega):
    """Active-set refinement, kept only if the KKT residual does not get worse."""
    cand = _active_solve(design, z, u, omega)
    if cand is None:
        return u
    if max(kkt_violations(cand, z, design, omega)) <= max(kkt_violations(u, z, design, omega)):
        return cand
    return u


def _solve(design: Design, z, omega, tol, max_iter, warm_start=None, polish=True) -> LassoInfo:
    u = np.zeros(design.p) if warm_start is None else np.array(warm_start, dtype=float)
    if u.shape != (design.p,):
        raise DimensionError(f"warm start has shape {u.shape}, expected ({design.p},)")
    hist = np.empty(max_iter)
    if design.use_gram:
        b = design.correlations(z)
        zz = float(z @ z) / design.n

        def kernel(u, budget, out):
            return _cd_gram(design.gram, design.col_sq, b, zz, u, float(omega), float(tol), budget, out)
    else:
        def kernel(u, budget, out):
            return _cd_naive(design.Xt, design.col_sq, z, u, float(omega), float(tol), budget, out)

    # Coordinate descent crawls once the active set is settled but the
    # active columns are nearly collinear; an exact solve on that set between
    # chunks of sweeps finishes the job when it certifies optimality.
    sweeps, converged = 0, False
    while sweeps < max_iter and not converged:
        budget = min(CD_CHUNK, max_iter - sweeps)
        done, converged = kernel(u, budget, hist[sweeps:sweeps + budget])
        sweeps += done
        if not converged and sweeps < max_iter:
            cand = _active_solve(design, z, u, omega)
            if cand is not None and max(kkt_violations(cand, z, design, omega)) <= tol:
                u = cand
                hist[sweeps] = lasso_objective(u, z, design, omega)
                sweeps += 1
                converged = True
    if polish and converged:
        u = _polish(design, z, u, omega)
    return LassoInfo(u=u, iters=int(sweeps), converged=bool(converged), objective=hist[:sweeps].copy())


def lasso_active_set(z, X, omega: float, warm_start=None, tol: float = 1e-8,
                     max_iter: int | None = None) -> LassoInfo:
    """Exact Lasso solution by an active-set (sign-constrained) method.

    Each iteration solves the stationarity equations on the working set; a
    coefficient that would change sign blocks the step and leaves the set,
    and the inactive column with the largest KKT violation joins it.  From a
    warm start at a nearby penalty only a handful of iterations are needed,
    which makes this the method of choice along a penalty path.  ``converged``
    is False when the iteration budget (default ``4 * p``) runs out or a
    working-set system is singular; callers should then fall back to
    :func:`lasso_cd`.
    """
    design = as_design(X)
    z = _check_response(z, design.n)
    n, p = design.n, design.p
    max_iter = 4 * p if max_iter is None else int(max_iter)
    u = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    b = design.correlations(z)
    G = design.gram if design.use_gram else None

    def grad(u):
        A = np.flatnonzero(u)
        if G is not None:
            return b - u[A] @ G[A]  # G is symmetric; row gathers are contiguous
        return design.Xt @ (z - design.X[:, A] @ u[A]) / n

    def gram_block(A):
        if G is not None:
            return G[np.ix_(A, A)]
        XA = design.X[:, A]
        return XA.T @ XA / n

    work = list(np.flatnonzero(u))
    signs = {j: np.sign(u[j]) for j in work}
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        if work:
            A = np.array(work)
            sA = np.array([signs[j] for j in A])
            try:
                w = np.linalg.solve(gram_block(A), b[A] - omega * sA)
            except np.linalg.LinAlgError:
                break
            bad = np.sign(w) != sA
            if bad.any():
                # walk toward w until the first coefficient hits zero, drop it
                uA = u[A]
                t = np.ones(A.size)
                t[bad] = uA[bad] / (uA[bad] - w[bad])
                k = int(np.argmin(t))
                u[A] = uA + t[k] * (w - uA)
                u[A[k]] = 0.0
                work.remove(A[k])
                del signs[A[k]]
                continue
            u[A] = w
        g = grad(u)
        viol = np.abs(g) - omega
        viol[work] = -np.inf
        j = int(np.argmax(viol)) if p else 0
        if not p or viol[j] <= tol:
            converged = max(kkt_violations(u, z, design, omega)) <= tol
            break
        if len(work) >= n:
            break
        work.append(j)
        signs[j] = np.sign(g[j])
    return LassoInfo(u=u, iters=it, converged=bool(converged),
                     objective=np.array([lasso_objective(u, z, design, omega)]))


def _check_response(z, n) -> np.ndarray:
    z = np.asarray(z, dtype=float).ravel()
    if z.shape[0] != n:
        raise DimensionError(f"response has length {z.shape[0]}, design has {n} rows")
    if not np.isfinite(z).all():
        raise NonFinite("response contains NaN/Inf entries")
    return z


def lasso_cd(z, X, cfg: LassoConfig, warm_start=None, *, polish=True, return_info=False):
    """Minimize ``||z - X u||^2 / (2n) + cfg.omega * ||u||_1`` by coordinate descent.

    ``X`` may be an array or a prepared :class:`Design`.  When ``max_iter``
    sweeps are exhausted the last iterate is returned and a
    :class:`ConvergenceWarning` is issued.  ``return_info=True`` returns a
    :class:`LassoInfo` carrying the per-sweep objective trace.
    """
    design = as_design(X)
    z = _check_response(z, design.n)
    info = _solve(design, z, cfg.omega, cfg.tol, cfg.max_iter, warm_start, polish)
    if not info.converged:
        warnings.warn(
            f"lasso_cd did not converge in {cfg.max_iter} sweeps (omega={cfg.omega:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return info if return_info else info.u


def scaled_lasso(z, X, omega0: float | None = DEFAULT_OMEGA0, opts: ScaledLassoOptions | None = None,
                 warm_start=None) -> ScaledLassoResult:
    """Joint minimizer of the scaled-Lasso objective.

    Iterates ``sigma <- max(sigma_floor, ||z - X u|| / sqrt(n))`` and
    ``u <- lasso(z, X, sigma * omega0)`` from ``u = warm_start`` (zero by
    default).  The returned ``sigma_hat`` is the scale whose penalty produced
    ``u_hat``, so ``omega_eff == sigma_hat * omega0`` holds exactly.
    ``omega0=None`` selects :func:`default_omega0` for the design's shape.
    """
    design = as_design(X)
    if omega0 is None:
        omega0 = default_omega0(design.n, design.p)
    if not omega0 > 0:
        raise ValueError(f"omega0 must be positive, got {omega0}")
    opts = opts or ScaledLassoOptions()
    z = _check_response(z, design.n)
    root_n = np.sqrt(design.n)

    state = {"u": np.zeros(design.p) if warm_start is None else np.array(warm_start, dtype=float),
             "iters": 0, "ok": True}

    def update(sigma):
        """One Lasso solve at ``sigma * omega0``; returns the implied new scale."""
        info = _solve(design, z, sigma * omega0, opts.tol, opts.max_iter, warm_start=state["u"])
        state["u"] = info.u
        state["ok"] = info.converged
        state["iters"] += 1
        return max(opts.sigma_floor, float(np.linalg.norm(z - design.X @ info.u)) / root_n)

    def close(a, b):
        return abs(a - b) <= opts.tol_sigma * max(1.0, b)

    sigma = max(opts.sigma_floor, float(np.linalg.norm(z - design.X @ state["u"])) / root_n)
    converged = False
    sigma_new = update(sigma)
    for _ in range(min(ALTERNATIONS_BEFORE_BRACKETING, opts.max_outer) - 1):
        if close(sigma_new, sigma) or sigma_new == sigma:
            converged = True
            break
        sigma = sigma_new
        sigma_new = update(sigma)
    else:
        converged = close(sigma_new, sigma) or sigma_new == sigma

    if not converged:
        # The scale map contracts slowly near a flat profile; the fixed point
        # is the unique sign change of g(s) = implied_scale(s) - s.
        sigma, converged = _bracket_scale(update, sigma, sigma_new, opts, close)
        if converged and state["iters"] < opts.max_outer:
            update(sigma)  # leave u at the final penalty

    u = state["u"]
    lasso_ok = state["ok"]
    iters = state["iters"]
    degenerate = sigma <= opts.sigma_floor
    if not (converged and lasso_ok):
        warnings.warn(
            f"scaled_lasso stopped after {iters} outer iterations without converging",
            ConvergenceWarning,
            stacklevel=2,
        )
    return ScaledLassoResult(
        u_hat=u,
        sigma_hat=sigma,
        omega_eff=sigma * omega0,
        iters=iters,
        converged=bool(converged and lasso_ok),
        degenerate=bool(degenerate),
    )


def _bracket_scale(update, sigma, sigma_new, opts, close):
    """Root of ``g(s) = update(s) - s`` by bracketing and Brent's method.

    ``g`` is positive below the optimal scale and non-positive above it (its
    sign is minus the derivative of the convex profile objective), so a sign
    change brackets the unique fixed point.
    """
    budget = opts.max_outer
    g_cur = sigma_new - sigma
    if g_cur > 0:
        lo, g_lo = sigma, g_cur
        hi = sigma_new
        g_hi = update(hi) - hi
        while g_hi > 0:
            if budget <= 0:
                return hi, False
            budget -= 1
            lo, g_lo = hi, g_hi
            hi = hi * 2
            g_hi = update(hi) - hi
    else:
        hi, g_hi = sigma, g_cur
        lo = sigma_new
        while True:
            lo = max(opts.sigma_floor, lo / 4)
            g_lo = update(lo) - lo
            if g_lo > 0:
                break
            if lo <= opts.sigma_floor:
                return opts.sigma_floor, True
            if budget <= 0:
                return lo, False
            budget -= 1
            hi, g_hi = lo, g_lo
    try:
        root = optimize.brentq(lambda s: update(s) - s, lo, hi,
                               xtol=opts.tol_sigma * 1e-2 * max(1.0, lo), rtol=4 * np.finfo(float).eps,
                               maxiter=max(budget, 10))
    except (RuntimeError, ValueError):
        return (lo + hi) / 2, False
    implied = update(root)
    return root, close(implied, root)


def kkt_violations(u, z, X, omega):
    """Largest KKT residuals (inactive, active) of the Lasso at ``omega``."""
    Xa = X.X if isinstance(X, Design) else np.asarray(X, float)
    u = np.asarray(u, dtype=float)
    n = Xa.shape[0]
    g = Xa.T @ (np.asarray(z, float) - Xa @ u) / n
    zero = u == 0
    inactive = float(np.max(np.abs(g[zero]) - omega, initial=0.0))
    active = float(np.max(np.abs(g[~zero] - omega * np.sign(u[~zero])), initial=0.0))
    return max(inactive, 0.0), active


def kkt_check(u, z, X, omega, tol_kkt: float = 1e-7) -> KKTReport:
    """Certify a Lasso solution through its subgradient optimality conditions."""
    Xa = X.X if isinstance(X, Design) else np.asarray(X, float)
    if Xa.shape[1] != np.asarray(u).shape[0] or Xa.shape[0] != np.asarray(z).shape[0]:
        raise DimensionError("u, z and X are not dimensionally consistent")
    inactive, active = kkt_violations(u, z, Xa, omega)
    return KKTReport(inactive, active, inactive <= tol_kkt and active <= tol_kkt)


def theoretical_omega(n: int, q: int, c_tilde: float, xi: float) -> float:
    """Per-layer penalty level from the consistency theory.

    ``c_tilde * (sqrt(n) + sqrt(q)) / sqrt(n q) * (xi + 1) / (xi - 1)``.  The
    constants are problem dependent and unknown in practice; this is a
    diagnostic only.
    """
    if xi <= 1:
        raise ValueError("xi must exceed 1")
    return c_tilde * (np.sqrt(n) + np.sqrt(q)) / np.sqrt(n * q) * (xi + 1) / (xi - 1)
