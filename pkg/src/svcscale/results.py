from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Criterion(str, Enum):
    """Bandwidth calibration criterion."""

    CV = "cv"
    AICC = "aicc"


class ModelTag(str, Enum):
    GWR = "GWR"
    GWRA = "GWRa"
    FBGWR = "FBGWR"
    FBGWRA = "FBGWRa"
    ESF = "ESF"
    REESF = "REESF"


@dataclass
class SvcFit:
    """Coefficient surfaces and diagnostics of a fitted SVC model.

    ``B[i, k]`` is the k-th coefficient at site i. ``scale_params`` holds
    whatever the model calibrated: bandwidth(s), selected eigenvector
    terms, or the RE-ESF scale/variance parameters.
    """

    B: np.ndarray
    p_star: float
    fitted: np.ndarray
    residuals: np.ndarray
    model: ModelTag
    scale_params: dict = field(default_factory=dict)
    singular_sites: list = field(default_factory=list)
    converged: bool = True

    @property
    def rss(self):
        return float(self.residuals @ self.residuals)

    @property
    def residual_sd(self):
        return float(np.sqrt(self.rss / len(self.residuals)))
