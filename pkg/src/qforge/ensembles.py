"""Samplers for random density-matrix ensembles.

Every sampler takes an explicit ``numpy.random.Generator`` stream; there is
no global RNG.  Parallel generation should hand each worker its own
independently seeded stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .qcore import (
    DensityMatrix,
    PureState,
    UnitaryMatrix,
    purity,
    tensor,
)

log = logging.getLogger(__name__)

KINDS = ("HS", "Bures", "HSHaar", "MA", "Z", "MEMS", "SeparableProduct", "HaarPure")

SEPARABLE_PURITY_FLOOR = 1.0 / 3.0
SEPARABLE_MAX_ATTEMPTS = 10**6


class EnsembleConfigError(ValueError):
    """Ensemble parameters missing, superfluous, or out of range."""


@dataclass(frozen=True)
class EnsembleSpec:
    """Tagged description of a sampling distribution plus its parameters."""

    kind: str
    dim: int = 4
    alpha: Optional[float] = None        # MA concentration
    k: Optional[int] = None              # MA mixture size
    beta: Optional[float] = None         # Z concentration
    purity_floor: Optional[float] = None  # SeparableProduct rejection threshold

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EnsembleConfigError(f"unknown ensemble kind {self.kind!r}")
        if self.dim < 2:
            raise EnsembleConfigError("dim must be at least 2")
        if self.kind == "MA":
            if self.alpha is None or self.k is None:
                raise EnsembleConfigError("MA requires alpha and k")
            if self.alpha <= 0:
                raise EnsembleConfigError("MA alpha must be > 0")
            if self.k < 1:
                raise EnsembleConfigError("MA k must be >= 1")
        elif self.kind == "Z":
            if self.beta is None:
                raise EnsembleConfigError("Z requires beta")
            if self.beta <= 0:
                raise EnsembleConfigError("Z beta must be > 0")
        elif self.kind in ("MEMS", "SeparableProduct"):
            if self.dim != 4:
                raise EnsembleConfigError(f"{self.kind} is two-qubit only (dim=4)")
            if self.purity_floor is not None and not 0.0 <= self.purity_floor < 1.0:
                raise EnsembleConfigError("purity_floor must lie in [0, 1)")
        allowed = {
            "MA": ("alpha", "k"),
            "Z": ("beta",),
            "SeparableProduct": ("purity_floor",),
        }.get(self.kind, ())
        for name in ("alpha", "k", "beta", "purity_floor"):
            if getattr(self, name) is not None and name not in allowed:
                raise EnsembleConfigError(f"{name} is not a parameter of {self.kind}")


@dataclass(frozen=True)
class MemsParam:
    """Concurrence parameter of a maximally entangled mixed state."""

    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise EnsembleConfigError(f"gamma must lie in [0, 1], got {self.gamma}")


def ginibre(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Complex Ginibre matrix: entries i.i.d. complex standard normal.

    Convention: real and imaginary parts each have variance 1/2, so
    E|G_ij|^2 = 1.  (Any overall scale cancels after trace normalization.)
    """
    return (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)


def haar_unitary(dim: int, rng: np.random.Generator) -> UnitaryMatrix:
    """Haar-distributed unitary via QR of a Ginibre matrix.

    The R-diagonal phase correction is required; plain QR is not Haar.
    """
    q, r = np.linalg.qr(ginibre(dim, rng))
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return UnitaryMatrix(q)


def haar_pure(dim: int, rng: np.random.Generator) -> PureState:
    """Haar-random pure state (normalized complex Gaussian vector)."""
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PureState(v / np.linalg.norm(v))


def sample_hs(dim: int, rng: np.random.Generator) -> DensityMatrix:
    """Hilbert-Schmidt measure: rho = G G† / Tr(G G†)."""
    g = ginibre(dim, rng)
    w = g @ g.conj().T
    return DensityMatrix(w / np.trace(w).real)


def sample_bures(dim: int, rng: np.random.Generator) -> DensityMatrix:
    """Bures measure: rho = (1+U) G G† (1+U†) / Tr[...]."""
    g = ginibre(dim, rng)
    u = haar_unitary(dim, rng).matrix
    a = np.eye(dim) + u
    w = a @ (g @ g.conj().T) @ a.conj().T
    w = 0.5 * (w + w.conj().T)
    return DensityMatrix(w / np.trace(w).real)


def sample_hs_haar(
    dim: int, rng: np.random.Generator, delta: Optional[float] = None
) -> DensityMatrix:
    """Convex mix (1-delta) rho_HS + delta |psi><psi| with delta ~ U[0, 1].

    `delta` can be forced for testing the endpoints.
    """
    if delta is None:
        delta = rng.uniform(0.0, 1.0)
    rho = sample_hs(dim, rng).matrix
    psi = haar_pure(dim, rng).amplitudes
    w = (1.0 - delta) * rho + delta * np.outer(psi, psi.conj())
    return DensityMatrix(w)


def sample_dirichlet(alpha: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Dirichlet draw via normalized Gamma variates.

    Exact for all alpha, including alpha < 1.  The redraw guard covers the
    (astronomically rare) event of every Gamma variate underflowing to zero.
    """
    if alpha <= 0:
        raise EnsembleConfigError("alpha must be > 0")
    if k < 1:
        raise EnsembleConfigError("k must be >= 1")
    while True:
        g = rng.gamma(alpha, 1.0, size=k)
        s = g.sum()
        if s > 0.0:
            return g / s


def sample_ma(alpha: float, k: int, dim: int, rng: np.random.Generator) -> DensityMatrix:
    """Dirichlet-weighted convex sum of K Haar-random pure states."""
    x = sample_dirichlet(alpha, k, rng)
    w = np.zeros((dim, dim), dtype=complex)
    for xi in x:
        psi = haar_pure(dim, rng).amplitudes
        w += xi * np.outer(psi, psi.conj())
    return DensityMatrix(w)


def sample_z(beta: float, dim: int, rng: np.random.Generator) -> DensityMatrix:
    """Dirichlet-distributed spectrum in a Haar-random eigenbasis."""
    x = sample_dirichlet(beta, dim, rng)
    u = haar_unitary(dim, rng).matrix
    w = (u * x) @ u.conj().T
    w = 0.5 * (w + w.conj().T)
    return DensityMatrix(w)


def ma_mean_purity(alpha: float, k: int, dim: int) -> float:
    """Closed-form purity expectation of the MA ensemble."""
    return (dim + alpha * (dim + k - 1)) / (dim * (1.0 + alpha * k))


def z_mean_purity(beta: float, dim: int) -> float:
    """Closed-form purity expectation of the Z ensemble."""
    return (1.0 + beta) / (1.0 + dim * beta)


def _mems_g(gamma: float) -> float:
    # The gamma = 2/3 boundary belongs to the gamma/2 branch.
    return gamma / 2.0 if gamma >= 2.0 / 3.0 else 1.0 / 3.0


def mems_purity(gamma: float) -> float:
    """Purity of the MEMS family: 1 - 4g + 6g^2 + gamma^2/2."""
    g = _mems_g(gamma)
    return 1.0 - 4.0 * g + 6.0 * g * g + gamma * gamma / 2.0


def mems_state(p: MemsParam) -> DensityMatrix:
    """Maximally entangled mixed state with concurrence gamma."""
    g = _mems_g(p.gamma)
    h = p.gamma / 2.0
    m = np.array(
        [
            [g, 0, 0, h],
            [0, 1.0 - 2.0 * g, 0, 0],
            [0, 0, 0, 0],
            [h, 0, 0, g],
        ],
        dtype=complex,
    )
    return DensityMatrix(m)


def sample_mems_rotated(rng: np.random.Generator) -> DensityMatrix:
    """MEMS with gamma ~ U(0, 1), conjugated by a random local unitary pair.

    Local rotations preserve both concurrence and purity.
    """
    gamma = rng.uniform(0.0, 1.0)
    rho = mems_state(MemsParam(gamma)).matrix
    u = np.kron(haar_unitary(2, rng).matrix, haar_unitary(2, rng).matrix)
    w = u @ rho @ u.conj().T
    w = 0.5 * (w + w.conj().T)
    return DensityMatrix(w)


def sample_separable(
    rng: np.random.Generator,
    purity_floor: float = SEPARABLE_PURITY_FLOOR,
    max_attempts: int = SEPARABLE_MAX_ATTEMPTS,
) -> DensityMatrix:
    """Product of two single-qubit HS states with Tr(rho^2) > purity_floor.

    Rejection-samples the purity constraint; errors out after `max_attempts`
    to guard against pathological thresholds.
    """
    for _ in range(max_attempts):
        rho = tensor(sample_hs(2, rng), sample_hs(2, rng))
        if purity(rho) > purity_floor:
            return rho
    raise EnsembleConfigError(
        f"separable sampler exceeded {max_attempts} attempts at floor {purity_floor}"
    )


def separable_acceptance_rate(n: int, rng: np.random.Generator,
                              purity_floor: float = SEPARABLE_PURITY_FLOOR) -> float:
    """Monte Carlo acceptance rate of the separable rejection loop."""
    accepted = sum(
        purity(tensor(sample_hs(2, rng), sample_hs(2, rng))) > purity_floor
        for _ in range(n)
    )
    rate = accepted / n
    log.debug("separable acceptance rate: %.4f over %d attempts", rate, n)
    return rate


def sample_state(spec: EnsembleSpec, rng: np.random.Generator) -> DensityMatrix:
    """Draw one state from the distribution described by `spec`."""
    if spec.kind == "HS":
        return sample_hs(spec.dim, rng)
    if spec.kind == "Bures":
        return sample_bures(spec.dim, rng)
    if spec.kind == "HSHaar":
        return sample_hs_haar(spec.dim, rng)
    if spec.kind == "MA":
        return sample_ma(spec.alpha, spec.k, spec.dim, rng)
    if spec.kind == "Z":
        return sample_z(spec.beta, spec.dim, rng)
    if spec.kind == "MEMS":
        return sample_mems_rotated(rng)
    if spec.kind == "SeparableProduct":
        floor = spec.purity_floor if spec.purity_floor is not None else SEPARABLE_PURITY_FLOOR
        return sample_separable(rng, purity_floor=floor)
    if spec.kind == "HaarPure":
        return haar_pure(spec.dim, rng).to_density()
    raise EnsembleConfigError(f"unhandled kind {spec.kind!r}")


def sample_ensemble(spec: EnsembleSpec, n: int, rng: np.random.Generator) -> list[DensityMatrix]:
    """Draw `n` states; deterministic given (spec, n, seed of rng)."""
    if n < 1:
        raise EnsembleConfigError("n must be >= 1")
    return [sample_state(spec, rng) for _ in range(n)]
