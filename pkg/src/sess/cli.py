"""Command-line interface: ``sess {run,gen,fit,predict,score}``.

Exit status is 0 on success, 1 for invalid configuration or input and 2 for
failures while computing.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment, factorcore, matio, metrics
from .errors import (ConfigError, DimensionError, IoError, NonFinite, NotStandardized, ParseError,
                     RaggedRows, SchemaError, SessError, ZeroColumn)

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2
INPUT_ERRORS = (ConfigError, DimensionError, IoError, NonFinite, NotStandardized, ParseError,
                RaggedRows, SchemaError, ZeroColumn, FileNotFoundError, json.JSONDecodeError)
CRITERION_FLAG = {"n": "n_scale", "q": "q_scale"}


class _Parser(argparse.ArgumentParser):
    """Usage errors count as invalid input (exit 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _sess_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mu", type=float, help="eigenvalue threshold (default 1e-3 * top eigenvalue)")
    parser.add_argument("--omega0", type=float, help="scaled-Lasso penalty level (default sqrt(log p / n))")
    parser.add_argument("--rmax", type=int, help="largest rank considered")
    parser.add_argument("--criterion", choices=sorted(CRITERION_FLAG), help="rank criterion scale")


def _sess_options(args) -> dict:
    opts = {"mu": args.mu, "omega0": args.omega0, "r_max": args.rmax,
            "criterion_variant": CRITERION_FLAG.get(args.criterion)}
    return {k: v for k, v in opts.items() if v is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sess", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a replicated experiment from a JSON config")
    run.add_argument("config", type=Path)
    run.add_argument("--seed", type=int, help="override base_seed")
    run.add_argument("--out", type=Path, help="override output_dir")
    run.add_argument("--threads", type=int, help="replications run concurrently")
    run.add_argument("--test-size", type=int, dest="test_size")
    _sess_flags(run)

    gen = sub.add_parser("gen", help="write one simulated data set as CSV files")
    gen.add_argument("config", type=Path)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--test-size", type=int, dest="test_size")

    fit = sub.add_parser("fit", help="fit the factor model to X and Y matrices")
    fit.add_argument("x", type=Path)
    fit.add_argument("y", type=Path)
    fit.add_argument("--out", type=Path, required=True)
    fit.add_argument("--header", action="store_true", help="skip a header line in the inputs")
    fit.add_argument("--threads", type=int, default=1, help="threads for per-layer solves")
    _sess_flags(fit)

    pred = sub.add_parser("predict", help="predict responses for new predictors")
    pred.add_argument("fit", type=Path)
    pred.add_argument("x", type=Path)
    pred.add_argument("--out", type=Path, required=True)
    pred.add_argument("--header", action="store_true")

    score = sub.add_parser("score", help="score a fit against a directory written by 'gen'")
    score.add_argument("fit", type=Path)
    score.add_argument("data", type=Path)
    score.add_argument("--out", type=Path, help="write the report here instead of stdout")
    return parser


# --- commands -----------------------------------------------------------------

def cmd_run(args) -> int:
    overrides = {"base_seed": args.seed, "output_dir": None if args.out is None else str(args.out.resolve()),
                 "threads": args.threads, "test_size": args.test_size}
    overrides.update(_sess_options(args))
    cfg = experiment.load_config(args.config, overrides)
    result = experiment.run_experiment(cfg)
    for method, entry in result.summary["methods"].items():
        parts = []
        for col in ("pe", "ee", "re", "fnr", "fpr"):
            mean = entry[col]["mean"]
            parts.append(f"{col}={mean:.4g}" if mean is not None else f"{col}=n/a")
        print(f"{method}: " + " ".join(parts))
    if result.failures:
        print(f"{len(result.failures)} replication(s) failed; see {result.output_dir / 'manifest.json'}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_gen(args) -> int:
    overrides = {"base_seed": args.seed, "test_size": args.test_size}
    cfg = experiment.load_config(args.config, overrides)
    if cfg.generator == "files":
        raise ConfigError("'gen' needs a simulated generator (sim1, sim2 or var)")
    rep = experiment.make_data(cfg, cfg.base_seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    matio.save_matrix(rep.train.X, out / "X.csv")
    matio.save_matrix(rep.train.Y, out / "Y.csv")
    matio.save_matrix(rep.X_test, out / "X_test.csv")
    matio.save_matrix(rep.Y_test, out / "Y_test.csv")
    matio.save_matrix(rep.truth.C_star, out / "C_star.csv")
    matio.save_matrix(rep.truth.U_star, out / "U_star.csv")
    (out / "truth.json").write_text(json.dumps(
        {"r_star": rep.truth.r_star, "generator": cfg.generator, "seed": cfg.base_seed,
         "params": cfg.params}, indent=1, sort_keys=True) + "\n")
    print(f"wrote {cfg.generator} data (seed {cfg.base_seed}) to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    X = matio.load_matrix(args.x, header=args.header)
    Y = matio.load_matrix(args.y, header=args.header)
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} rows")
    sds = matio.standardize(matio.Dataset(X, Y))
    fit = factorcore.fit_sess(sds, n_jobs=args.threads, **_sess_options(args))
    factorcore.save_fit(fit, args.out)
    print(f"r_hat={fit.r_hat} omega0={fit.omega0:.6g} -> {args.out}")
    return EXIT_OK


def predict_raw(fit: factorcore.SessFit, X) -> np.ndarray:
    """Predictions for raw-scale predictors using the scales stored in the fit."""
    X = np.asarray(X, float)
    if fit.col_scales is None:
        return factorcore.predict(fit, X)
    if X.ndim != 2 or X.shape[1] != fit.col_scales.shape[0]:
        raise DimensionError(f"X has {X.shape[-1]} columns, the fit expects p = {fit.col_scales.shape[0]}")
    return factorcore.predict(fit, matio.apply_scales(X, fit.col_scales))


def cmd_predict(args) -> int:
    fit = factorcore.load_fit(args.fit)
    X = matio.load_matrix(args.x, header=args.header)
    matio.save_matrix(predict_raw(fit, X), args.out)
    return EXIT_OK


def cmd_score(args) -> int:
    fit = factorcore.load_fit(args.fit)
    data = args.data
    doc = json.loads((data / "truth.json").read_text())
    C_star = matio.load_matrix(data / "C_star.csv")
    U_star = matio.load_matrix(data / "U_star.csv")
    X_test = matio.load_matrix(data / "X_test.csv")
    Y_test = matio.load_matrix(data / "Y_test.csv")
    truth = factorcore.SimTruth(C_star, U_star, np.zeros((C_star.shape[1], 0)), (), int(doc["r_star"]), {})
    scales = fit.col_scales if fit.col_scales is not None else np.ones(C_star.shape[0])
    C_raw = matio.destandardize_coef(fit.C_hat, scales)
    report = metrics.score(C_raw, truth, X_test, Y_test, rank_hat=metrics.numerical_rank(C_raw),
                           U_hat=fit.U_hat)
    text = json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "gen": cmd_gen, "fit": cmd_fit, "predict": cmd_predict, "score": cmd_score}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SessError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
