"""Focused instrument selection and post-selection inference for
two-sample summary-data Mendelian randomization."""

__version__ = "0.1.0"

from .estimator import FocusedMR
from .exceptions import (
    DataValidationError,
    EstimationError,
    FocusedMRError,
    FormatError,
    NumericError,
)
from .focus import SelectionResult, focused_estimate, kmeans_candidates
from .kmeans import KMeans1D, kmeans_1d
from .liml import minimize
from .postsel import all_intervals, delta_for_selection, simulate_lambda
from .simlab import SimConfig, run_cell, run_grid
from .summary_data import Dataset, InstrumentSet, parse_tsv, read_tsv, validate, write_tsv

__all__ = [
    "DataValidationError",
    "Dataset",
    "EstimationError",
    "FocusedMR",
    "FocusedMRError",
    "FormatError",
    "InstrumentSet",
    "KMeans1D",
    "NumericError",
    "SelectionResult",
    "SimConfig",
    "all_intervals",
    "delta_for_selection",
    "focused_estimate",
    "kmeans_1d",
    "kmeans_candidates",
    "minimize",
    "parse_tsv",
    "read_tsv",
    "run_cell",
    "run_grid",
    "simulate_lambda",
    "validate",
    "write_tsv",
]
