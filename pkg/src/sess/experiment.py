"""Config-driven Monte Carlo runner.

An experiment is a JSON document naming a data generator, the methods to fit
and the number of replications.  Replication ``i`` uses seed
``base_seed + i``; rows are written in seed order so the outputs depend only
on the config, never on thread scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import baseline, factorcore, matio, metrics, simgen
from .errors import ConfigError, ConvergenceWarning, DimensionError

GENERATORS = ("sim1", "sim2", "var", "files")
METHODS = ("sess", "lasso_baseline")
SESS_OPTION_KEYS = ("mu", "omega0", "r_max", "criterion_variant")
CSV_COLUMNS = ("seed", "method", "pe", "ee", "re", "fnr", "fpr", "r_hat", "elapsed_seconds")
METRIC_COLUMNS = ("pe", "ee", "re", "fnr", "fpr", "r_hat")
DEFAULT_TEST_SIZE = 10_000


@dataclass
class ExperimentConfig:
    generator: str
    params: dict = field(default_factory=dict)
    methods: tuple = ("sess",)
    replications: int = 1
    base_seed: int = 0
    output_dir: str = "results"
    sess: dict = field(default_factory=dict)
    test_size: int = DEFAULT_TEST_SIZE
    threads: int = 1
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError("replications must be an integer >= 1")
        if not isinstance(self.test_size, int) or self.test_size < 1:
            raise ConfigError("test_size must be an integer >= 1")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be an integer >= 1")
        bad = set(self.sess) - set(SESS_OPTION_KEYS)
        if bad:
            raise ConfigError(f"unknown sess options {sorted(bad)}")
        variant = self.sess.get("criterion_variant", "n_scale")
        if variant not in factorcore.CRITERIA:
            raise ConfigError(f"criterion_variant must be one of {factorcore.CRITERIA}")
        if self.generator == "files":
            for key in ("x", "y"):
                if key not in self.params:
                    raise ConfigError(f"generator 'files' needs params.{key}")
            for key in ("x", "y", "x_test", "y_test"):
                if key in self.params and not self.resolve(self.params[key]).is_file():
                    raise ConfigError(f"params.{key}: file {self.params[key]!r} does not exist")
            _file_data(self)  # shape checks are validation errors, not runtime ones
        else:
            # build once to surface bad generator parameters as config errors
            self.generator_config(self.base_seed)

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def generator_config(self, seed: int):
        params = {k: tuple(v) if isinstance(v, list) else v for k, v in self.params.items()}
        try:
            if self.generator == "sim1":
                return simgen.Sim1Config(**params, seed=seed)
            if self.generator == "sim2":
                return simgen.Sim2Config(**params, seed=seed)
            if self.generator == "var":
                return VarConfig(**params, seed=seed)
        except TypeError as exc:
            raise ConfigError(f"bad {self.generator} parameters: {exc}") from exc
        return None

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "base_dir"}
        out["methods"] = list(self.methods)
        return out


@dataclass(frozen=True)
class VarConfig:
    q: int = 20
    T: int = 200
    r: int = 1
    L: int = 1
    noise_scale: float = 1.0
    support: int = 5
    seed: int = 0

    def __post_init__(self):
        if min(self.q, self.T, self.r, self.L) < 1:
            raise ConfigError("var parameters q, T, r, L must be positive")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read an experiment file; ``overrides`` replace top-level or sess fields."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    doc = dict(doc)
    doc["sess"] = dict(doc.get("sess") or {})
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in SESS_OPTION_KEYS:
            doc["sess"][key] = value
        else:
            doc[key] = value
    known = {f.name for f in fields(ExperimentConfig)} - {"base_dir"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown config fields {sorted(extra)}")
    if "generator" not in doc:
        raise ConfigError("config needs a 'generator' field")
    return ExperimentConfig(**doc, base_dir=path.resolve().parent)


# --- data -------------------------------------------------------------------

@dataclass(eq=False)
class Replicate:
    train: matio.Dataset
    X_test: np.ndarray | None
    Y_test: np.ndarray | None
    truth: factorcore.SimTruth | None


def make_data(cfg: ExperimentConfig, seed: int) -> Replicate:
    gcfg = cfg.generator_config(seed)
    if cfg.generator == "sim1":
        ds, truth = simgen.gen_sim1(gcfg)
        X_test, Y_test = simgen.sim1_test_sample(gcfg, truth, cfg.test_size)
        return Replicate(ds, X_test, Y_test, truth)
    if cfg.generator == "sim2":
        ds, truth = simgen.gen_sim2(gcfg)
        X_test, Y_test = simgen.sim2_test_sample(gcfg, truth, cfg.test_size)
        return Replicate(ds, X_test, Y_test, truth)
    if cfg.generator == "var":
        return _var_data(gcfg, cfg.test_size)
    return _file_data(cfg)


def _var_data(vc: VarConfig, test_size: int) -> Replicate:
    series, vt = simgen.gen_var(vc.q, vc.T + test_size + vc.L, vc.r, vc.L, vc.noise_scale,
                                vc.seed, vc.support)
    full = factorcore.build_var_design(series, vc.L)
    n = vc.T
    ds = matio.Dataset(full.X[:n], full.Y[:n])
    C_star = vt.stacked
    rank = metrics.numerical_rank(C_star)
    U, V, supports = factorcore.layer_parametrization(ds.X, C_star, rank)
    truth = factorcore.SimTruth(C_star, U, V, supports, rank,
                                {"noise_scale": vc.noise_scale},
                                {"spectral_radius": vt.spectral_radius})
    return Replicate(ds, full.X[n:], full.Y[n:], truth)


def _file_data(cfg: ExperimentConfig) -> Replicate:
    p = cfg.params
    header = bool(p.get("header", False))
    X = matio.load_matrix(cfg.resolve(p["x"]), header=header)
    Y = matio.load_matrix(cfg.resolve(p["y"]), header=header)
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} rows")
    X_test = Y_test = None
    if "x_test" in p and "y_test" in p:
        X_test = matio.load_matrix(cfg.resolve(p["x_test"]), header=header)
        Y_test = matio.load_matrix(cfg.resolve(p["y_test"]), header=header)
    return Replicate(matio.Dataset(X, Y), X_test, Y_test, None)


# --- one replication ----------------------------------------------------------

def fit_method(method: str, sds: matio.Dataset, sess_opts: dict):
    """Returns ``(C_hat on the raw scale, r_hat, U_hat or None, fit or None)``."""
    if method == "sess":
        fit = factorcore.fit_sess(sds, **sess_opts)
        return matio.destandardize_coef(fit.C_hat, sds.col_scales), fit.r_hat, fit.U_hat, fit
    C = matio.destandardize_coef(baseline.lasso_baseline(sds), sds.col_scales)
    return C, metrics.numerical_rank(C), None, None


def _metric_row(seed, method, C_hat, r_hat, U_hat, rep: Replicate, elapsed) -> dict:
    nan = float("nan")
    row = {"seed": seed, "method": method, "pe": nan, "ee": nan, "re": nan,
           "fnr": nan, "fpr": nan, "r_hat": int(r_hat), "elapsed_seconds": elapsed}
    if rep.Y_test is not None:
        row["pe"] = metrics.pe(rep.Y_test, rep.X_test, C_hat)
    if rep.truth is not None:
        truth = rep.truth
        row["ee"] = metrics.ee(C_hat, truth.C_star)
        row["re"] = metrics.re(metrics.numerical_rank(C_hat), truth.r_star)
        if U_hat is None:
            U_hat = metrics.row_support_factors(C_hat, truth.r_star)
        row["fnr"], row["fpr"] = metrics.selection_rates(U_hat, truth.U_star)
    return row


def run_replication(cfg: ExperimentConfig, seed: int, fits_dir: Path | None = None) -> list:
    rep = make_data(cfg, seed)
    sds = matio.standardize(rep.train)
    rows = []
    for method in cfg.methods:
        start = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            C_hat, r_hat, U_hat, fit = fit_method(method, sds, cfg.sess)
        elapsed = time.perf_counter() - start
        rows.append(_metric_row(seed, method, C_hat, r_hat, U_hat, rep, elapsed))
        if fit is not None and fits_dir is not None:
            factorcore.save_fit(fit, fits_dir / f"{method}_seed{seed}.json")
    return rows


# --- aggregation and output --------------------------------------------------

def summarize(rows: list, methods) -> dict:
    """Means and standard errors (sd / sqrt(R)) of each metric per method."""
    out = {}
    for method in methods:
        sub = [r for r in rows if r["method"] == method]
        entry = {"replications": len(sub)}
        for col in METRIC_COLUMNS + ("elapsed_seconds",):
            vals = np.array([float(r[col]) for r in sub])
            vals = vals[~np.isnan(vals)]
            if vals.size == 0:
                entry[col] = {"mean": None, "se": None}
                continue
            se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            entry[col] = {"mean": float(np.mean(vals)), "se": se}
        out[method] = entry
    return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(rows: list, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["seed"] = int(row["seed"])
        for col in CSV_COLUMNS[2:]:
            row[col] = float(row[col])
    return rows


def _write_json(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


@dataclass
class RunResult:
    rows: list
    summary: dict
    failures: list
    output_dir: Path

    @property
    def ok(self) -> bool:
        return not self.failures


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Run every replication, then write ``replications.csv`` and ``summary.json``.

    Failed replications are listed in ``manifest.json`` next to the partial
    results instead of aborting the whole run.
    """
    out_dir = cfg.resolve(cfg.output_dir)
    fits_dir = out_dir / "fits"
    fits_dir.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.base_seed + i for i in range(cfg.replications)]

    def job(seed):
        try:
            return seed, run_replication(cfg, seed, fits_dir), None
        except Exception as exc:  # recorded in the manifest
            return seed, [], f"{type(exc).__name__}: {exc}"

    if cfg.threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(job, seeds))
    else:
        results = [job(s) for s in seeds]
    results.sort(key=lambda item: item[0])

    rows = [row for _, rs, _ in results for row in rs]
    failures = [{"seed": s, "error": err} for s, _, err in results if err]
    write_csv(rows, out_dir / "replications.csv")
    summary = {
        "config": cfg.to_dict(),
        "methods": summarize(rows, cfg.methods),
        "units": metrics.UNITS_NOTE,
        "standard_error": "sample standard deviation divided by sqrt(replications)",
    }
    _write_json(summary, out_dir / "summary.json")
    manifest = out_dir / "manifest.json"
    if failures:
        _write_json({"completed_seeds": sorted({r["seed"] for r in rows}), "failures": failures},
                    manifest)
    elif manifest.exists():
        manifest.unlink()
    return RunResult(rows, summary, failures, out_dir)
