"""Data-driven temperature selection for tempered Bayesian posteriors.

Stage 1 (:mod:`tempsel.select`) fits the network weights and the inverse
temperature beta jointly by maximum likelihood of the tempered model; stage 2
(:mod:`tempsel.sgmcmc`) samples the tempered posterior at T = 1/beta with
SGHMC; :mod:`tempsel.predictive` builds and scores the two posterior
predictive densities.  :mod:`tempsel.analytic` holds closed-form oracles.
"""
from tempsel.errors import ConfigError, DegenerateInputError, DivergenceError, InvalidInputError
from tempsel.dataset import LabeledDataset
from tempsel.network import NetworkSpec
from tempsel.model import GaussianHead, InverseTemperature, PosteriorEnergy, PriorSpec, SoftmaxHead, TemperedModel
from tempsel.select import SelectConfig, SelectionResult, select_map, select_mle, select_posthoc
from tempsel.sgmcmc import PosteriorSampleSet, SamplerConfig, run_chain
from tempsel.predictive import PAPER_BETA_GRID, PredictiveDensity, evaluate, grid_search
from tempsel.diagnostics import split_rhat, split_rhat_rank_normalized

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateInputError", "DivergenceError", "InvalidInputError", "LabeledDataset",
    "NetworkSpec", "GaussianHead", "InverseTemperature", "PosteriorEnergy", "PriorSpec", "SoftmaxHead",
    "TemperedModel", "SelectConfig", "SelectionResult", "select_map", "select_mle", "select_posthoc",
    "PosteriorSampleSet", "SamplerConfig", "run_chain", "PAPER_BETA_GRID", "PredictiveDensity", "evaluate",
    "grid_search", "split_rhat", "split_rhat_rank_normalized",
]
