"""Sequential scaled sparse factor regression.

Fits ``Y = X C + E`` with ``C`` jointly low rank and row sparse: latent
factors come from a plain eigendecomposition of the responses, and each
factor's sparse predictor weights from a scaled-Lasso regression.
"""

from .baseline import lasso_baseline
from .errors import ConvergenceWarning, SessError
from .factorcore import (Layer, SessFit, SimTruth, build_var_design, estimate_v, fit_sess, load_fit,
                         predict, save_fit, select_rank, top_eigenpairs)
from .matio import Dataset, destandardize_coef, load_matrix, save_matrix, standardize
from .metrics import ScoreReport, ee, pe, re, selection_rates
from .simgen import Sim1Config, Sim2Config, gen_sim1, gen_sim2, gen_var
from .solvers import LassoConfig, ScaledLassoOptions, kkt_check, lasso_cd, scaled_lasso

__version__ = "0.1.0"

__all__ = [
    "ConvergenceWarning", "Dataset", "Layer", "LassoConfig", "ScaledLassoOptions", "ScoreReport",
    "SessError", "SessFit", "Sim1Config", "Sim2Config", "SimTruth", "build_var_design",
    "destandardize_coef", "ee", "estimate_v", "fit_sess", "gen_sim1", "gen_sim2", "gen_var",
    "kkt_check", "lasso_baseline", "lasso_cd", "load_fit", "load_matrix", "pe", "predict", "re",
    "save_fit", "save_matrix", "scaled_lasso", "select_rank", "selection_rates", "standardize",
    "top_eigenpairs",
]
