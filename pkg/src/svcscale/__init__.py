"""Spatially varying coefficient models and their complexity diagnostics.

Six estimators share one result type: GWR with fixed or adaptive
bandwidths, flexible-bandwidth GWR fitted by backfitting, eigenvector
spatial filtering and its random-effects variant.
"""

from .complexity import effective_parameters
from .eigen import EigenBasis, basis_for_coords, moran_coefficient, moran_eigenbasis
from .errors import DataError, FitError, SvcError
from .esf import esf_fit
from .fbgwr import fbgwr_fit
from .gwr import calibrate_bandwidth, gwr_fit
from .reesf import reesf_fit, reesf_solve, restricted_loglik, scale_spectrum
from .results import Criterion, ModelTag, SvcFit
from .simulation import (generate_predictor, generate_svc_dataset, rmse_profile,
                         run_accuracy_experiment, run_complexity_experiment)
from .spatial import KernelMode, KernelSpec, SpatialDataset

__version__ = "0.1.0"

__all__ = [
    "Criterion", "DataError", "EigenBasis", "FitError", "KernelMode", "KernelSpec",
    "ModelTag", "SpatialDataset", "SvcError", "SvcFit", "basis_for_coords",
    "calibrate_bandwidth", "effective_parameters", "esf_fit", "fbgwr_fit",
    "generate_predictor", "generate_svc_dataset", "gwr_fit", "moran_coefficient",
    "moran_eigenbasis", "reesf_fit", "reesf_solve", "restricted_loglik",
    "rmse_profile", "run_accuracy_experiment", "run_complexity_experiment",
    "scale_spectrum",
]
