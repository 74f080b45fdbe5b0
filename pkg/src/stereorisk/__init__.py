"""Continuous stereo disparity by risk minimization over kernel-interpolated distributions."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .costvol import (CostVolume, DisparityMap, GrayImage, census_cost_volume,
                      census_transform, costs_to_pmf, match, matching_cost, predict_map,
                      sample_coarse, sample_refined, synthetic_pair)
from .distribution import DisparityPmf, Kernel, kernel_eval, normalize, pmf_density
from .errors import FormatError, InputError
from .grad import (PmfGradient, fit_pmf_demo, implicit_gradient, smooth_l1_grad,
                   smooth_l1_loss, total_loss)
from .metrics import EvalMask, EvalReport, d1_rate, epe, evaluate, outlier_rate
from .risk import (RiskConfig, SolveResult, oracle_grid_minimize, risk_derivative_l1, risk_l1,
                   solve_generic, solve_l1, solve_l2)

__all__ = [
    "BACKEND", "CostVolume", "DisparityMap", "DisparityPmf", "EvalMask", "EvalReport",
    "FormatError", "GrayImage", "InputError", "Kernel", "PmfGradient", "RiskConfig",
    "SolveResult", "census_cost_volume", "census_transform", "costs_to_pmf", "d1_rate", "epe",
    "evaluate", "fit_pmf_demo", "implicit_gradient", "kernel_eval", "match", "matching_cost",
    "normalize", "oracle_grid_minimize", "outlier_rate", "pmf_density", "predict_map",
    "risk_derivative_l1", "risk_l1", "sample_coarse", "sample_refined", "smooth_l1_grad",
    "smooth_l1_loss", "solve_generic", "solve_l1", "solve_l2", "synthetic_pair", "total_loss",
]
