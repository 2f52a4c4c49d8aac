"""Dataset container, column standardization and plain-text matrix I/O.

Predictors are scaled so that every column has L2-norm ``sqrt(n)``; nothing is
centered.  Matrices are stored as comma or tab separated text with 17
significant digits so that doubles survive a round trip unchanged.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (DimensionError, IoError, NonFinite, NotStandardized, ParseError, RaggedRows,
                     SessError, ZeroColumn)

ZERO_COLUMN_RTOL = 1e-12
STANDARDIZED_RTOL = 1e-8

_DELIMITERS = {"csv": ",", "tsv": "\t"}


@dataclass(frozen=True)
class Dataset:
    """Paired design ``X`` (n x p) and response ``Y`` (n x q)."""

    X: np.ndarray
    Y: np.ndarray
    col_scales: np.ndarray = field(default=None)
    standardized: bool = False

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise DimensionError("X and Y must be two-dimensional")
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(
                f"X has {X.shape[0]} rows but Y has {Y.shape[0]} rows"
            )
        n, p = X.shape
        if n < 2 or p < 1 or Y.shape[1] < 1:
            raise DimensionError(f"need n >= 2, p >= 1, q >= 1; got {X.shape} and {Y.shape}")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise NonFinite("X or Y contains NaN/Inf entries")
        scales = np.ones(p) if self.col_scales is None else np.asarray(self.col_scales, float)
        if scales.shape != (p,):
            raise DimensionError(f"col_scales has shape {scales.shape}, expected ({p},)")
        if self.standardized:
            if not (np.isfinite(scales).all() and (scales > 0).all()):
                raise NonFinite("col_scales must be positive and finite")
            if not column_norm_check(X):
                raise NotStandardized("standardized flag set but column norms differ from sqrt(n)")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "col_scales", scales)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]


def column_norm_check(X, rtol=STANDARDIZED_RTOL) -> bool:
    """True when every column of ``X`` has norm ``sqrt(n)`` within ``rtol``."""
    X = np.asarray(X, dtype=float)
    root_n = np.sqrt(X.shape[0])
    return bool(np.all(np.abs(np.linalg.norm(X, axis=0) - root_n) <= rtol * root_n))


def standardize(ds: Dataset) -> Dataset:
    """Rescale the columns of ``ds.X`` to L2-norm ``sqrt(n)``.

    ``col_scales[j]`` is the divisor applied to column ``j``, i.e. the original
    column norm divided by ``sqrt(n)``.
    """
    if ds.standardized:
        raise SessError("dataset is already standardized")
    root_n = np.sqrt(ds.n)
    norms = np.linalg.norm(ds.X, axis=0)
    small = np.flatnonzero(norms < ZERO_COLUMN_RTOL * root_n)
    if small.size:
        raise ZeroColumn(int(small[0]))
    scales = norms / root_n
    return Dataset(ds.X / scales, ds.Y, col_scales=scales, standardized=True)


def destandardize_coef(C_std, col_scales) -> np.ndarray:
    """Map coefficients fitted on standardized columns back to the raw scale."""
    C_std = np.asarray(C_std, dtype=float)
    col_scales = np.asarray(col_scales, dtype=float)
    if C_std.ndim == 1:
        C_std = C_std[:, None]
    if C_std.shape[0] != col_scales.shape[0]:
        raise DimensionError(
            f"coefficient matrix has {C_std.shape[0]} rows, col_scales has {col_scales.shape[0]}"
        )
    return C_std / col_scales[:, None]


def apply_scales(X, col_scales) -> np.ndarray:
    """Standardize new design rows with previously computed column scales."""
    X = np.asarray(X, dtype=float)
    col_scales = np.asarray(col_scales, dtype=float)
    if X.ndim != 2 or X.shape[1] != col_scales.shape[0]:
        raise DimensionError(
            f"X has {X.shape[-1] if X.ndim else 0} columns, expected {col_scales.shape[0]}"
        )
    return X / col_scales


def _delimiter(format: str) -> str:
    try:
        return _DELIMITERS[format]
    except KeyError:
        raise SessError(f"unknown matrix format {format!r}; use 'csv' or 'tsv'") from None


def format_from_path(path) -> str:
    return "tsv" if str(path).lower().endswith((".tsv", ".tab")) else "csv"


def load_matrix(path, format=None, header=False) -> np.ndarray:
    """Read a rectangular numeric matrix.

    Errors carry 1-based line and column numbers.  ``header=True`` skips the
    first line.
    """
    path = Path(path)
    format = format or format_from_path(path)
    delim = _delimiter(format)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    rows = []
    width = None
    for lineno, fields in enumerate(csv.reader(io.StringIO(text), delimiter=delim), start=1):
        if header and lineno == 1:
            continue
        if not fields or all(not f.strip() for f in fields):
            continue
        row = []
        for col, token in enumerate(fields, start=1):
            try:
                row.append(float(token))
            except ValueError:
                raise ParseError(lineno, col, token, path) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise RaggedRows(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
        rows.append(row)
    if not rows:
        raise ParseError(1, 1, "", path)
    return np.array(rows, dtype=float)


def save_matrix(M, path, format=None, header=None) -> None:
    """Write ``M`` with 17 significant digits; ``header`` is an optional list of names."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    path = Path(path)
    delim = _delimiter(format or format_from_path(path))
    lines = []
    if header is not None:
        lines.append(delim.join(str(h) for h in header))
    lines.extend(delim.join(f"{v:.17g}" for v in row) for row in M)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def with_flag_cleared(ds: Dataset) -> Dataset:
    """Copy of ``ds`` marked unstandardized with unit scales (used to re-standardize)."""
    return replace(ds, col_scales=np.ones(ds.p), standardized=False)
