"""Training-set engineering: bandpass filtering on purity and concurrence.

The recipe: pick the Dirichlet concentration that puts the mean purity of
the K=D mixture ensemble at the requested lower purity bound, sample the
mixture with K > D, and keep only states inside the closed purity and
concurrence intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import DensityMatrix, concurrence, purity
from .ensembles import sample_ma

PROBE_BATCH_MIN = 10_000
MIN_SURVIVAL_RATE = 1e-4


class InfeasibleSpecError(ValueError):
    """The requested band admits (essentially) no samples."""


class DomainError(ValueError):
    """Parameter outside the invertible domain of the purity expectation."""


@dataclass(frozen=True)
class BandpassSpec:
    """Closed purity and concurrence intervals for two-qubit states."""

    p_min: float
    p_max: float
    c_min: float
    c_max: float

    def __post_init__(self):
        if not 0.25 <= self.p_min <= self.p_max <= 1.0:
            raise ValueError(f"purity bounds must satisfy 1/4 <= p_min <= p_max <= 1, "
                             f"got [{self.p_min}, {self.p_max}]")
        if not 0.0 <= self.c_min <= self.c_max <= 1.0:
            raise ValueError(f"concurrence bounds must satisfy 0 <= c_min <= c_max <= 1, "
                             f"got [{self.c_min}, {self.c_max}]")

    def admits(self, p: float, c: float) -> bool:
        # Closed intervals on both properties.
        return (self.p_min <= p <= self.p_max) and (self.c_min <= c <= self.c_max)


def alpha_for_min_purity(p_min: float, dim: int = 4) -> float:
    """Invert the K=D mixture purity expectation at its lower bound:

        alpha = D (1 - P_min) / (D (D P_min - 1) - D + 1)

    Defined only for p_min > (2D - 1) / D^2, where the denominator is
    positive; below that the concentration would be nonpositive.
    """
    threshold = (2.0 * dim - 1.0) / dim**2
    denom = dim * (dim * p_min - 1.0) - dim + 1.0
    if p_min <= threshold or denom <= 0.0 or p_min >= 1.0:
        raise DomainError(
            f"p_min must lie in ({threshold:.6g}, 1) for D={dim}, got {p_min}"
        )
    return dim * (1.0 - p_min) / denom


def bandpass(states: Sequence[DensityMatrix], spec: BandpassSpec) -> list[DensityMatrix]:
    """Keep the states inside both closed intervals, preserving order."""
    return [s for s in states if spec.admits(purity(s), concurrence(s))]


def filtered_ma_states(
    alpha: float,
    spec: BandpassSpec,
    k: int,
    n_target: int,
    rng: np.random.Generator,
    dim: int = 4,
) -> list[DensityMatrix]:
    """Exactly `n_target` bandpassed mixture-ensemble states at a given
    concentration.  Oversampling proceeds in rate-adapted rounds for bounded
    memory; errors out if the probe batch shows the band is infeasible."""
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    kept: list[DensityMatrix] = []
    probe = max(2 * n_target, PROBE_BATCH_MIN)
    batch = [sample_ma(alpha, k, dim, rng) for _ in range(probe)]
    kept.extend(bandpass(batch, spec))
    rate = len(kept) / probe
    if rate < MIN_SURVIVAL_RATE:
        raise InfeasibleSpecError(
            f"survival rate {rate:.2e} below {MIN_SURVIVAL_RATE:.0e} over a "
            f"{probe}-sample probe; band {spec} is infeasible"
        )
    while len(kept) < n_target:
        remaining = n_target - len(kept)
        draw = int(np.ceil(remaining / rate * 1.2))
        batch = [sample_ma(alpha, k, dim, rng) for _ in range(draw)]
        kept.extend(bandpass(batch, spec))
    return kept[:n_target]


def engineer_training_set(
    spec: BandpassSpec,
    k: int,
    n_target: int,
    rng: np.random.Generator,
    dim: int = 4,
) -> list[DensityMatrix]:
    """Engineered set: concentration from `spec.p_min` at K=D, sampled at
    the supplied `k` (>= D), then bandpassed down to exactly `n_target`."""
    if k < dim:
        raise ValueError(f"k must be >= D={dim}, got {k}")
    if spec.p_min >= 1.0:
        raise InfeasibleSpecError("p_min = 1 admits only a measure-zero set of pure states")
    alpha = alpha_for_min_purity(spec.p_min, dim)
    return filtered_ma_states(alpha, spec, k, n_target, rng, dim)
