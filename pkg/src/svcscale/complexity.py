"""Effective number of parameters from known model parameters.

No fitting happens here: each model's hat matrix is assembled from the
supplied bandwidth, eigenvector selection ratio, or RE-ESF parameters and
its trace is returned.
"""

from dataclasses import dataclass

import numpy as np

from . import esf, reesf
from .gwr import Geometry, gwr_trace
from .spatial import KernelMode


@dataclass(frozen=True)
class GwrComplexity:
    bandwidth: float


@dataclass(frozen=True)
class GwraComplexity:
    """``fraction`` of N gives the neighbour count, floored at K + 2."""

    fraction: float

    def neighbours(self, n, k):
        return int(min(n, max(k + 2, round(self.fraction * n))))


@dataclass(frozen=True)
class EsfComplexity:
    q: float


@dataclass(frozen=True)
class ReesfComplexity:
    alpha: tuple
    sigma: tuple


@dataclass(frozen=True)
class ComplexityResult:
    p_star: float
    n_singular: int = 0


def _check(spec):
    if isinstance(spec, GwrComplexity):
        if not spec.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
    elif isinstance(spec, GwraComplexity):
        if not 0 < spec.fraction <= 1:
            raise ValueError("adaptive fraction must lie in (0, 1]")
    elif isinstance(spec, EsfComplexity):
        if not 0 <= spec.q <= 1:
            raise ValueError("selection ratio must lie in [0, 1]")
    elif isinstance(spec, ReesfComplexity):
        if len(spec.alpha) != len(spec.sigma):
            raise ValueError("alpha and sigma lengths differ")
    else:
        raise TypeError(f"unknown complexity spec {spec!r}")


def evaluate(data, spec, basis=None, geometry=None, system=None):
    """p* and the count of pseudo-inverse fallbacks for one model setting.

    ``system`` may carry a prebuilt :class:`reesf.ReEsfSystem` so repeated
    RE-ESF settings on one dataset reuse its cross-products.
    """
    _check(spec)
    if isinstance(spec, (GwrComplexity, GwraComplexity)):
        geom = geometry or Geometry(data.coords)
        if isinstance(spec, GwrComplexity):
            W = geom.weights(KernelMode.FIXED, spec.bandwidth)
        else:
            W = geom.weights(KernelMode.ADAPTIVE,
                             spec.neighbours(data.N, data.K))
        trace, singular = gwr_trace(W, data.X)
        return ComplexityResult(trace, int(singular.sum()))

    if basis is None:
        raise ValueError("ESF and RE-ESF complexity need an eigenbasis")
    if isinstance(spec, EsfComplexity):
        selected = esf.forced_selection(data.K, basis, spec.q)
        Z = esf.selection_design(data, basis, selected)
        return ComplexityResult(esf.projection_trace(Z))

    K = data.K
    alpha = np.broadcast_to(np.asarray(spec.alpha, dtype=float), (K,))
    sigma = np.broadcast_to(np.asarray(spec.sigma, dtype=float), (K,))
    if system is None:
        system = reesf.build_system(data, basis)
    return ComplexityResult(
        reesf.effective_parameters(system.with_params(alpha, sigma)))


def effective_parameters(data, spec, basis=None, geometry=None):
    """Effective number of parameters ``tr[H]`` for a known setting."""
    return evaluate(data, spec, basis, geometry).p_star
