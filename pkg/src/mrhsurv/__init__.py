"""Multi-resolution hazard models for stratified right-censored survival data."""

__version__ = "0.1.0"

from .survdata import CsvSchema, Dataset, TimeGrid, load_csv, write_csv  # noqa: E402
from .mrhtree import HyperParams, MrhTree, increments  # noqa: E402
from .pruner import PruneConfig, prune, prune_all  # noqa: E402
from .sampler import Chain, ChainConfig, run  # noqa: E402
from .simgen import CovariateSpec, HazardSpec, SimConfig, nelson_aalen, simulate  # noqa: E402
from .classic import fit_pe, fit_weibull_nph, pe_log_hr, weibull_log_hr  # noqa: E402
from .evaluate import FitSummary, gelman_rubin, geweke, gof, summarize  # noqa: E402

__all__ = [
    "CsvSchema", "Dataset", "TimeGrid", "load_csv", "write_csv",
    "HyperParams", "MrhTree", "increments",
    "PruneConfig", "prune", "prune_all",
    "Chain", "ChainConfig", "run",
    "CovariateSpec", "HazardSpec", "SimConfig", "nelson_aalen", "simulate",
    "fit_pe", "fit_weibull_nph", "pe_log_hr", "weibull_log_hr",
    "FitSummary", "gelman_rubin", "geweke", "gof", "summarize",
]
