"""Analytic probabilistic frequency response of a VSG-SFR model with GMM wind uncertainty."""

from .analytic import FrequencyMixture, solve_mixture
from .errors import ConfigError, RunIOError, NumericError, StochFreqError
from .gmm import Gmm, em_fit, moment_match
from .ito import GeneralizedItoProcess, from_gmm
from .mcs import McsConfig, McsResult, simulate
from .quantiles import QuantileSeries, inverse_cdf, parse_quantile_series, sample
from .sfr import LinearSdeSystem, SfrParams, aggregate, build_sde_system, step_response

__all__ = [
    "ConfigError", "FrequencyMixture", "GeneralizedItoProcess", "Gmm", "RunIOError",
    "LinearSdeSystem", "McsConfig", "McsResult", "NumericError", "QuantileSeries",
    "SfrParams", "StochFreqError", "aggregate", "build_sde_system", "em_fit",
    "from_gmm", "inverse_cdf", "moment_match", "parse_quantile_series", "sample",
    "simulate", "solve_mixture", "step_response",
]
