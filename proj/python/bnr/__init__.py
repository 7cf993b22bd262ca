"""Bayesian neural response models for task fMRI."""

from ._bnr import (
    ConfigError,
    DataError,
    Dataset,
    Error,
    NumericalError,
    alternating_blocks,
    bold_predictor,
    canonical_hrf,
    ess,
    fit,
    hths_marginal_logpdf,
    hths_marginal_lower_bound,
    isc,
    nngp_logpdf,
    run,
    simulate,
    split_rhat,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "Error",
    "NumericalError",
    "alternating_blocks",
    "bold_predictor",
    "canonical_hrf",
    "ess",
    "fit",
    "hths_marginal_logpdf",
    "hths_marginal_lower_bound",
    "isc",
    "nngp_logpdf",
    "run",
    "simulate",
    "split_rhat",
]

