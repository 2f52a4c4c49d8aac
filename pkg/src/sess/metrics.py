"""Scores for fitted coefficient matrices.

Error ratios are Frobenius-norm based, selection rates are percentages over
the ``p * r`` entries of the left factor matrix, and positions count as
selected when ``|value| > POSITIVE_THRESHOLD``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateTruth, DimensionError, ZeroDenominator

POSITIVE_THRESHOLD = 1e-12
RANK_RTOL = 1e-8
UNITS_NOTE = "fnr and fpr are percentages; pe and ee are Frobenius-norm ratios"


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def fnr(self) -> float:
        return 100.0 * self.fn / (self.fn + self.tp)

    @property
    def fpr(self) -> float:
        neg = self.fp + self.tn
        return 100.0 * self.fp / neg if neg else 0.0


@dataclass
class ScoreReport:
    pe: float
    ee: float
    re: int
    fnr: float
    fpr: float
    r2_per_factor: list = field(default_factory=list)
    forecast_error: float = float("nan")
    elapsed_seconds: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["units"] = UNITS_NOTE
        return d


def _ratio(num: float, den: float, what: str) -> float:
    if not den > 0:
        raise ZeroDenominator(f"{what} has zero norm")
    return float(num / den)


def pe(Y_test, X_test, C_hat) -> float:
    """``||Y_test - X_test C_hat||_F / ||Y_test||_F``."""
    Y_test = np.asarray(Y_test, float)
    X_test = np.asarray(X_test, float)
    C_hat = np.asarray(C_hat, float)
    if X_test.shape[1] != C_hat.shape[0] or Y_test.shape != (X_test.shape[0], C_hat.shape[1]):
        raise DimensionError(
            f"shapes do not agree: Y {Y_test.shape}, X {X_test.shape}, C {C_hat.shape}"
        )
    return _ratio(np.linalg.norm(Y_test - X_test @ C_hat), np.linalg.norm(Y_test), "Y_test")


def ee(C_hat, C_star) -> float:
    """``||C_hat - C_star||_F / ||C_star||_F``."""
    C_hat = np.asarray(C_hat, float)
    C_star = np.asarray(C_star, float)
    if C_hat.shape != C_star.shape:
        raise DimensionError(f"C_hat is {C_hat.shape}, C_star is {C_star.shape}")
    return _ratio(np.linalg.norm(C_hat - C_star), np.linalg.norm(C_star), "C_star")


def re(r_hat: int, r_star: int) -> int:
    return abs(int(r_hat) - int(r_star))


def numerical_rank(C, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol`` times the largest one."""
    s = np.linalg.svd(np.asarray(C, float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def confusion(U_hat, U_star) -> Confusion:
    """Support confusion counts; ``U_hat`` may have fewer or more columns than ``U_star``.

    Columns are matched by position.  Missing estimated columns count as
    zeros and surplus ones are ignored.
    """
    U_star = np.asarray(U_star, float)
    if U_star.ndim == 1:
        U_star = U_star[:, None]
    U_hat = np.asarray(U_hat, float)
    if U_hat.ndim == 1:
        U_hat = U_hat[:, None]
    p, r = U_star.shape
    if U_hat.shape[0] != p:
        raise DimensionError(f"U_hat has {U_hat.shape[0]} rows, U_star has {p}")
    est = np.zeros((p, r), dtype=bool)
    k = min(r, U_hat.shape[1])
    est[:, :k] = np.abs(U_hat[:, :k]) > POSITIVE_THRESHOLD
    truth = np.abs(U_star) > POSITIVE_THRESHOLD
    if not truth.any():
        raise DegenerateTruth("U_star has no nonzero entries")
    return Confusion(
        tp=int(np.sum(est & truth)),
        fp=int(np.sum(est & ~truth)),
        tn=int(np.sum(~est & ~truth)),
        fn=int(np.sum(~est & truth)),
    )


def selection_rates(U_hat, U_star) -> tuple[float, float]:
    """``(FNR, FPR)`` in percent."""
    c = confusion(U_hat, U_star)
    return c.fnr, c.fpr


def row_support_factors(C_hat, r: int) -> np.ndarray:
    """Broadcast the nonzero-row pattern of ``C_hat`` to ``r`` columns.

    Left singular vectors of a row-sparse matrix live on its nonzero rows, so
    this is the support pattern of a coefficient matrix that has no explicit
    layer structure.
    """
    C_hat = np.asarray(C_hat, float)
    rows = (np.abs(C_hat) > POSITIVE_THRESHOLD).any(axis=1).astype(float)
    return np.repeat(rows[:, None], r, axis=1)


def r2_per_factor(Y_test, Yhat_test) -> list:
    """Per-column ``1 - SS_res / SS_tot`` around the column mean.

    Columns with zero variance are reported as ``nan``; :func:`mean_r2`
    skips them.
    """
    Y = np.asarray(Y_test, float)
    Yh = np.asarray(Yhat_test, float)
    if Y.shape != Yh.shape:
        raise DimensionError(f"Y is {Y.shape}, prediction is {Yh.shape}")
    ss_tot = np.sum((Y - Y.mean(axis=0)) ** 2, axis=0)
    ss_res = np.sum((Y - Yh) ** 2, axis=0)
    out = []
    for res_j, tot_j in zip(ss_res, ss_tot):
        out.append(float(1.0 - res_j / tot_j) if tot_j > 0 else float("nan"))
    return out


def mean_r2(values) -> float:
    arr = np.asarray(values, float)
    arr = arr[~np.isnan(arr)]
    return float(arr.mean()) if arr.size else float("nan")


def forecast_error(Y, X, C_hat) -> float:
    """``||Y - X C_hat||_F^2 / (n q)``."""
    Y = np.asarray(Y, float)
    R = Y - np.asarray(X, float) @ np.asarray(C_hat, float)
    return float(np.sum(R * R) / Y.size)


def score(C_hat, truth, X_test, Y_test, rank_hat: int | None = None, U_hat=None,
          elapsed_seconds: float = 0.0) -> ScoreReport:
    """All simulation metrics for one fit.

    ``U_hat`` defaults to the row-support pattern of ``C_hat``;
    ``rank_hat`` defaults to the numerical rank of ``C_hat``.
    """
    C_hat = np.asarray(C_hat, float)
    r_star = truth.r_star
    if rank_hat is None:
        rank_hat = numerical_rank(C_hat)
    if U_hat is None:
        U_hat = row_support_factors(C_hat, r_star)
    fnr, fpr = selection_rates(U_hat, truth.U_star)
    Yhat = np.asarray(X_test, float) @ C_hat
    return ScoreReport(
        pe=pe(Y_test, X_test, C_hat),
        ee=ee(C_hat, truth.C_star),
        re=re(rank_hat, numerical_rank(truth.C_star)),
        fnr=fnr,
        fpr=fpr,
        r2_per_factor=r2_per_factor(Y_test, Yhat),
        forecast_error=forecast_error(Y_test, X_test, C_hat),
        elapsed_seconds=float(elapsed_seconds),
    )
