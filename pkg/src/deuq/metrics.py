"""Band quality metrics: coverage, extrapolation inflation, and fit error.

These turn the qualitative picture (tight band over the training domain,
flaring band outside it) into numbers a test can pin down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import StructuralError
from .problems import Interval
from .uq.predictive import PredictiveBand


@dataclass(frozen=True)
class BandReport:
    """Summary of one enforced band against a reference solution.

    coverage_k2 and rmse_train are computed over the training-domain part
    of the grid; inflation_ratio is mean std outside the training domain
    over mean std inside (infinite when the inside band is exactly flat).
    """

    coverage_k2: float
    mean_std_train: float
    mean_std_extrap: float
    inflation_ratio: float
    rmse_train: float


def coverage(band: PredictiveBand, reference: np.ndarray, k: float) -> float:
    """Fraction of grid entries with |mean - reference| <= k * std."""
    if k <= 0.0:
        raise StructuralError("coverage width k must be positive")
    reference = _aligned_reference(band, reference)
    hit = np.abs(band.mean - reference) <= k * band.std
    return float(hit.mean())


def in_train_mask(grid: np.ndarray, train_domain: Sequence[Interval]) -> np.ndarray:
    """True where a grid point lies inside the closed training domain."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    mask = np.ones(grid.shape[0], dtype=bool)
    for axis, (lo, hi) in enumerate(train_domain):
        mask &= (grid[:, axis] >= lo) & (grid[:, axis] <= hi)
    return mask


def inflation_ratio(band: PredictiveBand, train_domain: Sequence[Interval],
                    extrap_domain: Sequence[Interval]) -> float:
    """Mean std strictly outside the training domain over mean std inside."""
    inside = in_train_mask(band.grid, train_domain)
    in_extrap = in_train_mask(band.grid, extrap_domain)
    outside = in_extrap & ~inside
    if not inside.any() or not outside.any():
        raise StructuralError("need grid points both inside and outside train_domain")
    std_in = float(band.std[inside].mean())
    std_out = float(band.std[outside].mean())
    if std_in == 0.0:
        return math.inf
    return std_out / std_in


def rmse(values: np.ndarray, reference: np.ndarray) -> float:
    """Root mean squared deviation between two equal-length vectors."""
    values = np.asarray(values, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if values.size == 0:
        raise StructuralError("rmse of empty vectors is undefined")
    if values.shape != reference.shape:
        raise StructuralError("rmse inputs disagree in shape")
    return float(np.sqrt(np.mean((values - reference) ** 2)))


def band_report(band: PredictiveBand, reference: np.ndarray,
                train_domain: Sequence[Interval],
                extrap_domain: Sequence[Interval], k: float = 2.0) -> BandReport:
    """Assemble the headline metrics for one enforced band."""
    reference = _aligned_reference(band, reference)
    inside = in_train_mask(band.grid, train_domain)
    in_extrap = in_train_mask(band.grid, extrap_domain)
    outside = in_extrap & ~inside
    if not inside.any() or not outside.any():
        raise StructuralError("need grid points both inside and outside train_domain")
    train_band = PredictiveBand(band.grid[inside], band.mean[inside],
                                band.std[inside], band.enforced)
    return BandReport(
        coverage_k2=coverage(train_band, reference[inside], k),
        mean_std_train=float(band.std[inside].mean()),
        mean_std_extrap=float(band.std[outside].mean()),
        inflation_ratio=inflation_ratio(band, train_domain, extrap_domain),
        rmse_train=rmse(band.mean[inside], reference[inside]),
    )


def _aligned_reference(band: PredictiveBand, reference: np.ndarray) -> np.ndarray:
    reference = np.asarray(reference, dtype=float)
    if reference.ndim == 1:
        reference = reference.reshape(-1, 1)
    if reference.shape != band.mean.shape:
        raise StructuralError("reference grid does not align with the band")
    return reference
