"""Density estimation with low-rank models of the characteristic tensor."""

from .density import (
    conditional_mean,
    conditional_means,
    impute,
    log_likelihood,
    marginal_model,
    pdf_eval,
)
from .ecf import Dataset, ScalingRecord, TripleCf, normalize, read_csv, write_csv
from .factorization import CpdModel, FitOptions, FitReport, fit
from .modelfile import load_model, save_model
from .sampler import sample

__all__ = [
    "CpdModel",
    "Dataset",
    "FitOptions",
    "FitReport",
    "ScalingRecord",
    "TripleCf",
    "conditional_mean",
    "conditional_means",
    "fit",
    "impute",
    "load_model",
    "log_likelihood",
    "marginal_model",
    "normalize",
    "pdf_eval",
    "read_csv",
    "sample",
    "save_model",
    "write_csv",
]

__version__ = "0.1.0"
