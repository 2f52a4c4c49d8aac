"""Reproducible synthetic data for sparse low-rank multi-response regression.

Every random matrix is drawn from its own Philox stream keyed by
``SeedSequence([seed, stream])`` so that changing one piece of a design never
shifts the draws of another.  Stream ids:

====  ====================================================
id    contents
====  ====================================================
0     training predictors X (sim1; X2 block for sim2)
1     seed coefficient matrix (sim1) / left vectors (sim2)
2     training errors E
3     test predictors
4     test errors
5     right vectors (sim2)
6     orthogonal completion (sim2)
7     X1 block (sim2, training)
8     X1 block (sim2, test)
10    VAR coefficients
11    VAR innovations
====  ====================================================
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, SingularCompletion, UnstableSystem
from .factorcore import SimTruth, layer_parametrization
from .matio import Dataset

STREAM_X, STREAM_C, STREAM_E, STREAM_XTEST, STREAM_ETEST = 0, 1, 2, 3, 4
STREAM_V, STREAM_COMPLETION, STREAM_X1, STREAM_X1TEST = 5, 6, 7, 8
STREAM_VAR_COEF, STREAM_VAR_NOISE = 10, 11

BURN_IN = 200
MAX_REDRAWS = 50


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Independent counter-based generator for one (seed, stream) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), stream])))


def ar1_cov(dim: int, rho: float) -> np.ndarray:
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def gaussian_rows(rng, m, cov_chol) -> np.ndarray:
    """``m`` i.i.d. rows from ``N(0, L L')`` given the lower Cholesky factor ``L``."""
    return rng.standard_normal((m, cov_chol.shape[0])) @ cov_chol.T


def scaled_t(rng, size, df) -> np.ndarray:
    """Student-t draws rescaled to unit variance (needs ``df > 2``)."""
    return rng.standard_t(df, size=size) * np.sqrt((df - 2.0) / df)


def error_norm_bound(Sigma, n: int, q: int, t: float | None = None) -> float:
    """High-probability bound ``gamma_u (sqrt(n) + sqrt(q) + t)`` on ``||E||_2``.

    ``gamma_u = ||Sigma^{1/2}||_2``; ``t`` defaults to ``sqrt(n)``, for which the
    bound fails with probability at most ``exp(-n/2)``.
    """
    gamma_u = np.sqrt(np.linalg.eigvalsh(np.asarray(Sigma, float))[-1])
    t = np.sqrt(n) if t is None else t
    return float(gamma_u * (np.sqrt(n) + np.sqrt(q) + t))


# --- simulation example 1 ---------------------------------------------------

@dataclass(frozen=True)
class Sim1Config:
    n: int = 100
    p: int = 800
    q: int = 200
    r: int = 3
    rho_x: float = 0.5
    rho_e: float = 0.5
    gamma: float = 0.1
    nnz_seed_count: int = 90
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "p", "q", "r", "nnz_seed_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.r > min(self.p, self.q):
            raise ConfigError(f"r={self.r} exceeds min(p, q)")
        if self.nnz_seed_count > self.p * self.q:
            raise ConfigError("nnz_seed_count exceeds p*q")
        for name in ("rho_x", "rho_e"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")


def _sim1_coefficients(cfg: Sim1Config) -> np.ndarray:
    rng = rng_stream(cfg.seed, STREAM_C)
    C = np.zeros(cfg.p * cfg.q)
    pos = rng.choice(cfg.p * cfg.q, size=cfg.nnz_seed_count, replace=False)
    C[pos] = rng.standard_normal(cfg.nnz_seed_count)
    C = C.reshape(cfg.p, cfg.q)
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    if np.count_nonzero(s > 1e-12 * s[0]) < cfg.r:
        raise ConfigError(f"seed matrix has rank below r={cfg.r}; raise nnz_seed_count")
    s_new = np.arange(100.0, 100.0 - cfg.r, -1.0)
    C_star = (U[:, :cfg.r] * s_new) @ Vt[:cfg.r]
    # singular vectors of a sparse matrix are exactly sparse; drop SVD round-off
    C_star[np.abs(C_star) <= 1e-12 * np.abs(C_star).max()] = 0.0
    return C_star


def gen_sim1(cfg: Sim1Config):
    """AR(1)-correlated Gaussian design with a sparse rank-``r`` coefficient matrix.

    The seed matrix has ``nnz_seed_count`` N(0, 1) entries at uniformly random
    cells; its top ``r`` singular values are replaced by ``100, 99, ...`` and
    the rest set to zero.  Rows of ``E`` are ``N(0, gamma * Sigma_E)``.
    """
    C_star = _sim1_coefficients(cfg)
    lx = np.linalg.cholesky(ar1_cov(cfg.p, cfg.rho_x))
    le = np.linalg.cholesky(ar1_cov(cfg.q, cfg.rho_e))
    X = gaussian_rows(rng_stream(cfg.seed, STREAM_X), cfg.n, lx)
    E = np.sqrt(cfg.gamma) * gaussian_rows(rng_stream(cfg.seed, STREAM_E), cfg.n, le)
    Y = X @ C_star + E
    U, V, supports = layer_parametrization(X, C_star, cfg.r)
    truth = SimTruth(
        C_star=C_star, U_star=U, V_star=V, supports=supports, r_star=cfg.r,
        noise={"kind": "gaussian", "gamma": cfg.gamma, "rho_e": cfg.rho_e},
        extras={"generator": "sim1", "config": asdict(cfg)},
    )
    return Dataset(X, Y), truth


def sim1_test_sample(cfg: Sim1Config, truth: SimTruth, m: int):
    lx = np.linalg.cholesky(ar1_cov(cfg.p, cfg.rho_x))
    le = np.linalg.cholesky(ar1_cov(cfg.q, cfg.rho_e))
    X = gaussian_rows(rng_stream(cfg.seed, STREAM_XTEST), m, lx)
    E = np.sqrt(cfg.gamma) * gaussian_rows(rng_stream(cfg.seed, STREAM_ETEST), m, le)
    return X, X @ truth.C_star + E


# --- simulation example 2 ---------------------------------------------------

@dataclass(frozen=True)
class Sim2Config:
    n: int = 400
    p: int = 500
    q: int = 200
    d_star: tuple = (60.0, 30.0, 10.0)
    sparsity: tuple = (8, 9, 9)
    snr: float = 0.75
    df: float = 5.0
    rho_x: float = 0.5
    rho_e: float = 0.5
    u_offsets: tuple = (0, 5, 11)
    v_offsets: tuple = (0, 5, 10)
    v_size: int = 5
    seed: int = 0

    def __post_init__(self):
        r = len(self.d_star)
        if not (len(self.sparsity) == len(self.u_offsets) == len(self.v_offsets) == r):
            raise ConfigError("d_star, sparsity, u_offsets and v_offsets must have equal length")
        if min(self.n, self.p, self.q) < 1 or self.n < 2:
            raise ConfigError("dimensions must be positive")
        for off, s in zip(self.u_offsets, self.sparsity):
            if s < 1 or off + s > self.p:
                raise ConfigError(f"u support [{off}, {off + s}) does not fit in p={self.p}")
        for off in self.v_offsets:
            if off + self.v_size > self.q:
                raise ConfigError(f"v support [{off}, {off + self.v_size}) does not fit in q={self.q}")
        if r >= self.p:
            raise ConfigError("rank must be below p")
        if not self.snr > 0 or not self.df > 2:
            raise ConfigError("snr must be positive and df > 2")


def _sim2_vectors(cfg: Sim2Config):
    r = len(cfg.d_star)
    rng_u = rng_stream(cfg.seed, STREAM_C)
    rng_v = rng_stream(cfg.seed, STREAM_V)
    U = np.zeros((cfg.p, r))
    V = np.zeros((cfg.q, r))
    for j in range(r):
        off, s = cfg.u_offsets[j], cfg.sparsity[j]
        U[off:off + s, j] = rng_u.choice([-1.0, 1.0], size=s)
        U[:, j] /= np.linalg.norm(U[:, j])
        mag = rng_v.uniform(0.3, 1.0, size=cfg.v_size)
        sign = rng_v.choice([-1.0, 1.0], size=cfg.v_size)
        off = cfg.v_offsets[j]
        V[off:off + cfg.v_size, j] = mag * sign
        V[:, j] /= np.linalg.norm(V[:, j])
    return U, V


def _sim2_completion(cfg: Sim2Config, U):
    p, r = U.shape
    G = rng_stream(cfg.seed, STREAM_COMPLETION).standard_normal((p, p - r))
    Qu, _ = np.linalg.qr(U)
    G -= Qu @ (Qu.T @ G)
    U_perp, _ = np.linalg.qr(G)
    P = np.hstack([U, U_perp])
    cond = np.linalg.cond(P)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularCompletion(f"completed basis has condition number {cond:.3g}")
    return P


def _sim2_design(cfg: Sim2Config, P, r, m, stream_x1, stream_x2):
    S = P.T @ ar1_cov(cfg.p, cfg.rho_x) @ P
    S11, S12, S22 = S[:r, :r], S[:r, r:], S[r:, r:]
    B = np.linalg.solve(S11, S12)  # conditional mean map x1 -> x2
    cond_cov = S22 - S12.T @ B
    cond_cov = (cond_cov + cond_cov.T) / 2
    chol = np.linalg.cholesky(cond_cov)
    X1 = rng_stream(cfg.seed, stream_x1).standard_normal((m, r))
    X2 = X1 @ B + gaussian_rows(rng_stream(cfg.seed, stream_x2), m, chol)
    Z = np.hstack([X1, X2])
    X = np.linalg.solve(P.T, Z.T).T  # Z P^{-1}
    return X, X1


def gen_sim2(cfg: Sim2Config):
    """Design built in rotated coordinates with heavy-tailed correlated errors.

    ``X = (X1, X2) P^{-1}`` with ``P = (U*, U*_perp)``, so ``X U* = X1`` has
    i.i.d. standard normal rows.  Errors are ``sigma * E0 Sigma_E^{1/2}`` with
    unit-variance t entries in ``E0``; ``sigma`` is solved from the realized
    matrices so that ``||d_r X u_r v_r'||_F / ||E||_F`` equals ``snr``.
    """
    r = len(cfg.d_star)
    U, V = _sim2_vectors(cfg)
    d = np.asarray(cfg.d_star, dtype=float)
    C_star = (U * d) @ V.T
    P = _sim2_completion(cfg, U)
    X, X1 = _sim2_design(cfg, P, r, cfg.n, STREAM_X1, STREAM_X)

    root_e = np.real(linalg.sqrtm(ar1_cov(cfg.q, cfg.rho_e)))
    E0 = scaled_t(rng_stream(cfg.seed, STREAM_E), (cfg.n, cfg.q), cfg.df) @ root_e
    last = d[-1] * np.outer(X @ U[:, -1], V[:, -1])
    sigma = np.linalg.norm(last) / (cfg.snr * np.linalg.norm(E0))
    E = sigma * E0
    Y = X @ C_star + E

    Up, Vp, supports = layer_parametrization(X, C_star, r)
    truth = SimTruth(
        C_star=C_star, U_star=Up, V_star=Vp, supports=supports, r_star=r,
        noise={"kind": "scaled_t", "df": cfg.df, "sigma": float(sigma), "rho_e": cfg.rho_e},
        extras={
            "generator": "sim2",
            "config": asdict(cfg),
            "u_construction": U,
            "v_construction": V,
            "completion": P,
            "X1": X1,
            "sqrt_sigma_e": root_e,
            "snr_realized": float(np.linalg.norm(last) / np.linalg.norm(E)),
        },
    )
    return Dataset(X, Y), truth


def sim2_test_sample(cfg: Sim2Config, truth: SimTruth, m: int):
    r = truth.r_star
    X, _ = _sim2_design(cfg, truth.extras["completion"], r, m, STREAM_X1TEST, STREAM_XTEST)
    E0 = scaled_t(rng_stream(cfg.seed, STREAM_ETEST), (m, cfg.q), cfg.df) @ truth.extras["sqrt_sigma_e"]
    return X, X @ truth.C_star + truth.noise["sigma"] * E0


# --- synthetic VAR panel -----------------------------------------------------

@dataclass(frozen=True)
class VarTruth:
    lags: tuple  # C_1, ..., C_L, each q x q; y(t) = sum_i C_i' y(t-i) + e(t)
    stacked: np.ndarray = field(repr=False)  # rows aligned with build_var_design
    spectral_radius: float = 0.0
    draws: int = 1


def stack_lags(lags) -> np.ndarray:
    """Stack ``C_L, ..., C_1`` vertically to match ``(y(t-L)', ..., y(t-1)')``."""
    return np.vstack(list(reversed(lags)))


def companion_radius(lags) -> float:
    L = len(lags)
    q = lags[0].shape[0]
    F = np.zeros((L * q, L * q))
    F[:q] = np.hstack([C.T for C in lags])
    if L > 1:
        F[q:, :-q] = np.eye((L - 1) * q)
    return float(np.max(np.abs(np.linalg.eigvals(F))))


def simulate_var(lags, T: int, noise_scale: float, rng, burn_in: int = BURN_IN) -> np.ndarray:
    """Run ``y(t) = sum_i C_i' y(t-i) + noise_scale * e(t)`` and keep the last ``T`` steps.

    The ``L`` pre-sample values are standard normal so the path is not
    identically zero when ``noise_scale == 0``.
    """
    L = len(lags)
    q = lags[0].shape[0]
    total = L + burn_in + T
    y = np.zeros((total, q))
    y[:L] = rng.standard_normal((L, q))
    shocks = rng.standard_normal((total, q))
    for t in range(L, total):
        acc = noise_scale * shocks[t]
        for i, C in enumerate(lags, start=1):
            acc = acc + C.T @ y[t - i]
        y[t] = acc
    return y[-T:]


def _draw_lags(rng, q, r, L, support):
    U = np.zeros((L * q, r))
    for k in range(r):
        rows = rng.choice(L * q, size=min(support, L * q), replace=False)
        U[rows, k] = rng.uniform(0.3, 1.0, rows.size) * rng.choice([-1.0, 1.0], rows.size)
    V = rng.standard_normal((q, r)) / np.sqrt(q)
    B = 0.8 * U @ V.T
    # B stacks C_L, ..., C_1 (design order)
    blocks = [B[b * q:(b + 1) * q] for b in range(L)]
    return tuple(reversed(blocks))


def gen_var(q: int, T: int, r: int = 1, L: int = 1, noise_scale: float = 1.0, seed: int = 0,
            support: int = 5, max_radius: float = 0.95):
    """Simulate a stable VAR(L) whose stacked coefficients are low rank and row sparse.

    Coefficients are redrawn until the companion spectral radius is below
    ``max_radius``; :class:`UnstableSystem` is raised after 50 attempts.
    """
    if min(q, T, r, L) < 1 or r > min(L * q, q):
        raise ConfigError("need positive q, T, L and 1 <= r <= q")
    rng = rng_stream(seed, STREAM_VAR_COEF)
    for attempt in range(1, MAX_REDRAWS + 1):
        lags = _draw_lags(rng, q, r, L, support)
        rad = companion_radius(lags)
        if rad < max_radius:
            break
    else:
        raise UnstableSystem(f"no stable draw in {MAX_REDRAWS} attempts (last radius {rad:.3f})")
    series = simulate_var(lags, T, noise_scale, rng_stream(seed, STREAM_VAR_NOISE))
    return series, VarTruth(lags=lags, stacked=stack_lags(lags), spectral_radius=rad, draws=attempt)
