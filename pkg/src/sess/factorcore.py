"""Sequential factor regression: eigen-extraction, rank selection, per-layer fits.

The response matrix is decomposed through the eigenproblem of ``Y Y' / (n q)``.
Each eigenvector, scaled to norm ``sqrt(n)``, is a latent factor ``z_k``; its
loading ``v_k = Y' z_k / n`` is closed form and the sparse left vector ``u_k``
comes from a scaled-Lasso regression of ``z_k`` on ``X``.  The rank is chosen
by minimizing ``sqrt(n) log L(k) + k log n`` where ``L(k)`` is the normalized
residual sum of squares after removing ``k`` factor layers.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import solvers
from .errors import (DimensionError, InsufficientLength, IoError, LayerError, NonFinite, SchemaError,
                     SessError)
from .matio import Dataset

DEFAULT_MU_RELATIVE = 1e-3
DEFAULT_RMAX_CAP = 50
CRITERIA = ("n_scale", "q_scale")


@dataclass(frozen=True, eq=False)
class Layer:
    z_hat: np.ndarray = field(repr=False)
    lambda_hat: float
    v_hat: np.ndarray = field(repr=False)
    u_hat: np.ndarray = field(repr=False)
    sigma_hat: float
    converged: bool = True


@dataclass(frozen=True)
class TraceEntry:
    k: int
    loss: float
    criterion: float


@dataclass(frozen=True, eq=False)
class SessFit:
    layers: tuple
    r_hat: int
    C_hat: np.ndarray = field(repr=False)
    criterion_trace: tuple
    mu: float
    omega0: float
    criterion_variant: str = "n_scale"
    eigenvalues: tuple = ()
    col_scales: np.ndarray | None = field(default=None, repr=False)

    @property
    def U_hat(self) -> np.ndarray:
        p = self.C_hat.shape[0]
        if not self.layers:
            return np.zeros((p, 0))
        return np.column_stack([layer.u_hat for layer in self.layers])

    @property
    def V_hat(self) -> np.ndarray:
        q = self.C_hat.shape[1]
        if not self.layers:
            return np.zeros((q, 0))
        return np.column_stack([layer.v_hat for layer in self.layers])


@dataclass(frozen=True, eq=False)
class SimTruth:
    """Ground truth of a simulated data set.

    ``U_star``/``V_star`` follow the layer parametrization of ``X C*``: the
    latent factors ``X u_k`` are orthogonal with norm ``sqrt(n)`` on the
    training design and ``v_k`` absorbs the singular value.
    """

    C_star: np.ndarray = field(repr=False)
    U_star: np.ndarray = field(repr=False)
    V_star: np.ndarray = field(repr=False)
    supports: tuple
    r_star: int
    noise: dict
    extras: dict = field(default_factory=dict, repr=False)


def layer_parametrization(X, C_star, rank, tol=1e-12):
    """Split ``C*`` into layers whose latent factors ``X u_k`` are orthogonal.

    Uses the SVD ``X C* / sqrt(n) = A D V0'``: ``u_k = C* v0_k / d_k`` and
    ``v_k = d_k v0_k``.  Returns ``(U, V, supports)``.
    """
    X = np.asarray(X, float)
    n = X.shape[0]
    _, d, V0t = np.linalg.svd(X @ C_star / np.sqrt(n), full_matrices=False)
    d = d[:rank]
    V0 = V0t[:rank].T
    U = C_star @ V0 / d
    V = V0 * d
    # fix signs so the largest |entry| of each v_k is positive
    for k in range(rank):
        if V[np.argmax(np.abs(V[:, k])), k] < 0:
            U[:, k] *= -1
            V[:, k] *= -1
    row_active = np.abs(C_star).max(axis=1) > 0
    U[~row_active] = 0.0
    scale = np.abs(U).max(initial=0.0)
    supports = tuple(
        tuple(int(i) for i in np.flatnonzero(np.abs(U[:, k]) > tol * max(scale, 1.0)))
        for k in range(rank)
    )
    return U, V, supports


def top_eigenpairs(Y, r_max: int):
    """Leading eigenpairs of ``Y Y' / (n q)`` via a thin SVD of ``Y``.

    Returns a list of ``(z, lam)`` with ``||z|| = sqrt(n)`` and eigenvalues in
    decreasing order.
    """
    pairs, _ = _eigen(Y, r_max)
    return pairs


def _eigen(Y, r_max):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DimensionError("Y must be 2-D")
    n, q = Y.shape
    if not 1 <= r_max <= min(n, q):
        raise DimensionError(f"r_max={r_max} must lie in [1, min(n, q)={min(n, q)}]")
    if not np.isfinite(Y).all():
        raise NonFinite("Y contains NaN/Inf entries")
    try:
        A, s, _ = np.linalg.svd(Y, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SessError(f"SVD of Y did not converge: {exc}") from exc
    lam = s**2 / (n * q)
    root_n = np.sqrt(n)
    pairs = [(A[:, k] * root_n, float(lam[k])) for k in range(r_max)]
    return pairs, lam


def estimate_v(Y, z) -> np.ndarray:
    """Loading vector ``Y' z / n`` for a latent factor of norm ``sqrt(n)``."""
    Y = np.asarray(Y, dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    n = Y.shape[0]
    if z.shape[0] != n:
        raise DimensionError(f"factor has length {z.shape[0]}, Y has {n} rows")
    if abs(np.linalg.norm(z) - np.sqrt(n)) > 1e-6 * np.sqrt(n):
        raise DimensionError(f"factor norm {np.linalg.norm(z):.6g} differs from sqrt(n)")
    return Y.T @ z / n


def direct_loss(Y, factors, loadings) -> float:
    """``||Y - sum_j z_j v_j'||_F^2 / (n q)`` computed from the residual itself."""
    Y = np.asarray(Y, float)
    R = Y.copy()
    for z, v in zip(factors, loadings):
        R -= np.outer(z, v)
    return float(np.sum(R * R) / Y.size)


def criterion_value(loss: float, k: int, n: int, q: int, variant: str = "n_scale") -> float:
    if variant == "n_scale":
        return float(np.sqrt(n) * np.log(loss) + k * np.log(n))
    if variant == "q_scale":
        return float(np.sqrt(q) * np.log(loss) + k * np.log(q))
    raise ValueError(f"unknown criterion variant {variant!r}; use one of {CRITERIA}")


def select_rank(Y, eigenpairs, criterion_variant: str = "n_scale"):
    """Choose the number of factor layers by the BIC-type criterion.

    ``L(0) = ||Y||_F^2 / (n q)`` and ``L(k) = L(k-1) - lambda_k``.  When the
    subtraction has cancelled down to rounding level the loss is recomputed
    from the explicit residual instead.  Candidates with ``L(k) <= 0`` end the
    trace.  Returns ``(r_hat, trace)`` with ``trace`` a list of
    :class:`TraceEntry` starting at ``k = 0``.
    """
    if criterion_variant not in CRITERIA:
        raise ValueError(f"unknown criterion variant {criterion_variant!r}")
    Y = np.asarray(Y, float)
    n, q = Y.shape
    if len(eigenpairs) == 0:
        raise ValueError("eigenpairs must be non-empty")
    L0 = float(np.sum(Y * Y) / (n * q))
    floor = 64 * np.finfo(float).eps * L0
    trace = []
    loss = L0
    factors, loadings = [], []
    for k in range(len(eigenpairs) + 1):
        if k > 0:
            z, lam = eigenpairs[k - 1]
            factors.append(z)
            loadings.append(Y.T @ z / n)
            loss = loss - lam
            if loss <= floor:
                loss = direct_loss(Y, factors, loadings)
        if not loss > 0:
            break
        trace.append(TraceEntry(k, loss, criterion_value(loss, k, n, q, criterion_variant)))
    if not trace:
        # Y == 0: the empty model is the only sensible answer
        return 0, []
    best = min(trace, key=lambda e: (e.criterion, e.k))
    return best.k, trace


def fit_sess(ds: Dataset, mu: float | None = None, omega0: float | None = solvers.DEFAULT_OMEGA0,
             r_max: int | None = None, criterion_variant: str = "n_scale",
             lasso_opts: solvers.ScaledLassoOptions | None = None, n_jobs: int = 1) -> SessFit:
    """Fit the sequential scaled sparse factor model to a standardized data set.

    Parameters
    ----------
    ds : Dataset
        Standardized predictors and responses.
    mu : float, optional
        Eigenvalue threshold; layers with ``lambda_k <= mu`` are not
        extracted.  Defaults to ``1e-3 * lambda_1``.
    omega0 : float, optional
        Universal scaled-Lasso penalty level; ``None`` uses
        :func:`sess.solvers.default_omega0` for the design's shape.
    r_max : int, optional
        Cap on candidate ranks; ``min(n, q, 50)`` by default.
    criterion_variant : {"n_scale", "q_scale"}
    n_jobs : int
        Threads for the per-layer scaled-Lasso fits.  Layers are independent,
        so the result does not depend on this value.
    """
    if not ds.standardized:
        raise SessError("fit_sess needs a standardized dataset; call matio.standardize first")
    if mu is not None and mu < 0:
        raise ValueError("mu must be >= 0")
    n, q = ds.Y.shape
    if omega0 is None:
        omega0 = solvers.default_omega0(n, ds.p)
    if not omega0 > 0:
        raise ValueError("omega0 must be > 0")
    cap = min(n, q, DEFAULT_RMAX_CAP)
    r_cap = cap if r_max is None else max(1, min(int(r_max), n, q))

    pairs_all, _ = _eigen(ds.Y, r_cap)
    lam1 = pairs_all[0][1]
    mu_used = DEFAULT_MU_RELATIVE * lam1 if mu is None else float(mu)
    pairs = []
    for z, lam in pairs_all:
        if not lam > mu_used:
            break
        v = ds.Y.T @ z / n
        # sign convention: largest-magnitude loading positive
        if v[np.argmax(np.abs(v))] < 0:
            z = -z
        pairs.append((z, lam))

    if pairs:
        r_hat, trace = select_rank(ds.Y, pairs, criterion_variant)
    else:
        # nothing clears mu (or Y == 0): only the empty model remains
        L0 = float(np.sum(ds.Y**2) / ds.Y.size)
        r_hat = 0
        trace = [TraceEntry(0, L0, criterion_value(L0, 0, n, q, criterion_variant))] if L0 > 0 else []

    design = solvers.Design(ds.X)
    if design.use_gram and r_hat:
        design.gram  # build once before threads share it

    def solve(k):
        z, lam = pairs[k]
        try:
            res = solvers.scaled_lasso(z, design, omega0, lasso_opts)
        except SessError as exc:
            raise LayerError(k + 1, exc) from exc
        return Layer(z, lam, ds.Y.T @ z / n, res.u_hat, res.sigma_hat, res.converged)

    if n_jobs > 1 and r_hat > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            layers = list(pool.map(solve, range(r_hat)))
    else:
        layers = [solve(k) for k in range(r_hat)]

    C_hat = np.zeros((ds.p, q))
    for layer in layers:
        C_hat += np.outer(layer.u_hat, layer.v_hat)

    return SessFit(
        layers=tuple(layers),
        r_hat=r_hat,
        C_hat=C_hat,
        criterion_trace=tuple(trace),
        mu=mu_used,
        omega0=float(omega0),
        criterion_variant=criterion_variant,
        eigenvalues=tuple(lam for _, lam in pairs),
        col_scales=ds.col_scales.copy(),
    )


def predict(fit: SessFit, X_new) -> np.ndarray:
    """``X_new @ C_hat`` for a design standardized with the training scales."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != fit.C_hat.shape[0]:
        raise DimensionError(
            f"X_new has {X_new.shape[-1]} columns, the fit expects p = {fit.C_hat.shape[0]}"
        )
    return X_new @ fit.C_hat


def build_var_design(series, L: int) -> Dataset:
    """Lagged design for a VAR(L): row t holds ``(y(t-L)', ..., y(t-1)')``, response ``y(t)``."""
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    T, q = series.shape
    if L < 1 or T <= L:
        raise InsufficientLength(f"need T > L >= 1, got T={T}, L={L}")
    n = T - L
    X = np.hstack([series[b:b + n] for b in range(L)])
    return Dataset(X, series[L:].copy())


# --- serialization ---------------------------------------------------------

def fit_to_dict(fit: SessFit) -> dict:
    layers = []
    for layer in fit.layers:
        idx = np.flatnonzero(layer.u_hat)
        layers.append({
            "lambda_hat": layer.lambda_hat,
            "sigma_hat": layer.sigma_hat,
            "u_hat": [[int(i), float(layer.u_hat[i])] for i in idx],
            "v_hat": [float(x) for x in layer.v_hat],
        })
    return {
        "r_hat": fit.r_hat,
        "mu": fit.mu,
        "omega0": fit.omega0,
        "criterion_variant": fit.criterion_variant,
        "p": int(fit.C_hat.shape[0]),
        "q": int(fit.C_hat.shape[1]),
        "eigenvalues": [float(x) for x in fit.eigenvalues],
        "layers": layers,
        "criterion_trace": [
            {"k": e.k, "loss": e.loss, "criterion": e.criterion} for e in fit.criterion_trace
        ],
        "col_scales": None if fit.col_scales is None else [float(x) for x in fit.col_scales],
    }


def fit_from_dict(doc: dict) -> SessFit:
    try:
        p, q = int(doc["p"]), int(doc["q"])
        layers = []
        for item in doc["layers"]:
            u = np.zeros(p)
            for i, val in item["u_hat"]:
                u[int(i)] = float(val)
            v = np.asarray(item["v_hat"], dtype=float)
            if v.shape != (q,):
                raise SchemaError(f"v_hat has length {v.shape[0]}, expected {q}")
            layers.append(Layer(np.empty(0), float(item["lambda_hat"]), v, u, float(item["sigma_hat"])))
        C_hat = np.zeros((p, q))
        for layer in layers:
            C_hat += np.outer(layer.u_hat, layer.v_hat)
        trace = tuple(TraceEntry(int(e["k"]), float(e["loss"]), float(e["criterion"]))
                      for e in doc.get("criterion_trace", []))
        scales = doc.get("col_scales")
        return SessFit(
            layers=tuple(layers),
            r_hat=int(doc["r_hat"]),
            C_hat=C_hat,
            criterion_trace=trace,
            mu=float(doc["mu"]),
            omega0=float(doc["omega0"]),
            criterion_variant=doc.get("criterion_variant", "n_scale"),
            eigenvalues=tuple(float(x) for x in doc.get("eigenvalues", [])),
            col_scales=None if scales is None else np.asarray(scales, dtype=float),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaError(f"malformed fit document: {exc!r}") from exc


def save_fit(fit: SessFit, path) -> None:
    Path(path).write_text(json.dumps(fit_to_dict(fit), indent=1) + "\n")


def load_fit(path) -> SessFit:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read fit file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
    return fit_from_dict(doc)
