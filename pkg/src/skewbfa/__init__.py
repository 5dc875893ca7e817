"""Mixtures of skewed matrix-variate bilinear factor analyzers.

Clustering and semi-supervised classification for stacks of matrix
observations, with skew-t, generalized hyperbolic, variance-gamma,
normal inverse Gaussian, and Gaussian component families, estimated by
a three-stage AECM algorithm with BIC model selection.
"""

from .aecm import (
    FitError,
    FitOptions,
    FitResult,
    MixtureModel,
    StartFailure,
    fit,
    observed_loglik,
)
from .bfa import ComponentParams
from .datagen import SimConfig, generate
from .families import FAMILIES, SKEW_FAMILIES
from .formats import (
    FormatError,
    load_model,
    read_labels,
    read_mvstack,
    save_model,
    write_labels,
    write_mvstack,
)
from .metrics import ari, mcr
from .selection import (
    ModelGridSpec,
    SelectionError,
    count_free_params,
    grid_search,
)

__version__ = "0.1.0"

__all__ = [
    "FAMILIES",
    "SKEW_FAMILIES",
    "ComponentParams",
    "FitError",
    "FitOptions",
    "FitResult",
    "FormatError",
    "MixtureModel",
    "ModelGridSpec",
    "SelectionError",
    "SimConfig",
    "StartFailure",
    "ari",
    "count_free_params",
    "fit",
    "generate",
    "grid_search",
    "load_model",
    "mcr",
    "observed_loglik",
    "read_labels",
    "read_mvstack",
    "save_model",
    "write_labels",
    "write_mvstack",
]
