"""Core quantum-state types, metrics, and the Cholesky tau-vector codec.

Everything here is a pure function of its inputs; density matrices are
immutable and validated on construction (Hermitian, unit trace, positive
semidefinite within fixed tolerances).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
NORM_TOL = 1e-12
UNITARY_TOL = 1e-10
PPT_TOL = 1e-9

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_I = np.eye(2, dtype=complex)


class DimensionError(ValueError):
    """Operation applied to a state of unsupported dimension."""


class StateValidationError(ValueError):
    """An array does not satisfy the invariants of its quantum type."""


class DegenerateInputError(ValueError):
    """Input carries no information (e.g. an all-zero tau vector)."""


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """D x D Hermitian, PSD, unit-trace state; the universal currency."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateValidationError(f"expected a square matrix, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise StateValidationError("matrix is not Hermitian within 1e-12")
        if abs(np.trace(m).real - 1.0) > TRACE_TOL or abs(np.trace(m).imag) > TRACE_TOL:
            raise StateValidationError(f"trace {np.trace(m)} is not 1 within 1e-10")
        if np.min(np.linalg.eigvalsh(m)) < -PSD_TOL:
            raise StateValidationError("matrix has an eigenvalue below -1e-10")
        object.__setattr__(self, "matrix", m)
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def qubits(self) -> int:
        d = int(round(np.log2(self.dim)))
        if 2**d != self.dim:
            raise DimensionError(f"dimension {self.dim} is not a power of two")
        return d


@dataclass(frozen=True, eq=False)
class PureState:
    """Unit-norm state vector."""

    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.amplitudes, dtype=complex).ravel()
        if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
            raise StateValidationError("state vector is not unit norm within 1e-12")
        object.__setattr__(self, "amplitudes", v)
        self.amplitudes.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def to_density(self) -> DensityMatrix:
        v = self.amplitudes
        return DensityMatrix(np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    """D x D unitary."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateValidationError(f"expected a square matrix, got shape {m.shape}")
        if np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))) > UNITARY_TOL:
            raise StateValidationError("matrix is not unitary within 1e-10")
        object.__setattr__(self, "matrix", m)
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class TauVector:
    """Real parameter vector of the lower-triangular factor zeta, rho ~ zeta zeta†.

    Layout for D = 2^d: the first D entries are the diagonal of zeta; the
    remaining D^2 - D entries hold the off-diagonal entries as interleaved
    (real, imag) pairs, swept subdiagonal by subdiagonal (offset 1 first,
    each subdiagonal top to bottom).  For two qubits this reproduces

        [t0          0           0          0 ]
        [t4+i t5     t1          0          0 ]
        [t10+i t11   t6+i t7     t2         0 ]
        [t14+i t15   t12+i t13   t8+i t9    t3]
    """

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        d = int(round(np.log2(len(v)) / 2))
        if 4**d != len(v) or len(v) < 4:
            raise StateValidationError(f"tau length {len(v)} is not 4^d for d >= 1")
        object.__setattr__(self, "values", v)
        self.values.setflags(write=False)

    @property
    def qubits(self) -> int:
        return int(round(np.log2(len(self.values)) / 2))

    @property
    def dim(self) -> int:
        return 2**self.qubits


def _tau_offdiag_positions(dim: int) -> list[tuple[int, int]]:
    # Subdiagonal-major sweep; fixed by the two-qubit layout above.
    return [(i, i - k) for k in range(1, dim) for i in range(k, dim)]


def tau_to_cholesky(tau: TauVector) -> np.ndarray:
    """Assemble the lower-triangular zeta matrix from a tau vector."""
    dim = tau.dim
    v = tau.values
    zeta = np.zeros((dim, dim), dtype=complex)
    zeta[np.diag_indices(dim)] = v[:dim]
    for n, (i, j) in enumerate(_tau_offdiag_positions(dim)):
        zeta[i, j] = v[dim + 2 * n] + 1j * v[dim + 2 * n + 1]
    return zeta


def cholesky_to_tau(zeta: np.ndarray) -> TauVector:
    """Flatten a lower-triangular matrix into the tau layout."""
    dim = zeta.shape[0]
    v = np.empty(dim * dim, dtype=float)
    v[:dim] = np.diagonal(zeta).real
    for n, (i, j) in enumerate(_tau_offdiag_positions(dim)):
        v[dim + 2 * n] = zeta[i, j].real
        v[dim + 2 * n + 1] = zeta[i, j].imag
    return TauVector(v)


def tau_decode(tau: TauVector) -> DensityMatrix:
    """rho = zeta zeta† / Tr(zeta zeta†); valid for any real tau.

    The division guarantees physicality for arbitrary (e.g. network-emitted)
    tau vectors, since zeta zeta† is only PSD, not unit-trace.
    """
    zeta = tau_to_cholesky(tau)
    w = zeta @ zeta.conj().T
    tr = np.trace(w).real
    if tr <= 0.0:
        raise DegenerateInputError("tau vector decodes to a zero matrix")
    w = w / tr
    w = 0.5 * (w + w.conj().T)
    return DensityMatrix(w)


def tau_encode(rho: DensityMatrix, floor: float = 1e-12) -> TauVector:
    """Cholesky parameterization of rho.

    Rank-deficient states are handled by flooring eigenvalues at `floor` and
    renormalizing before factorization; the perturbation sits below the
    metric tolerances used everywhere else.
    """
    vals, vecs = np.linalg.eigh(rho.matrix)
    vals = np.maximum(vals, floor)
    vals = vals / vals.sum()
    m = (vecs * vals) @ vecs.conj().T
    m = 0.5 * (m + m.conj().T)
    zeta = np.linalg.cholesky(m)
    return cholesky_to_tau(zeta)


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2); equals the squared Frobenius norm for Hermitian rho."""
    return float(np.sum(np.abs(rho.matrix) ** 2))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    # Hermitian eigendecomposition with flooring at 0: robust for
    # near-singular states inside fidelity/concurrence.  Eigenvalues that
    # are zero up to working precision are set to exactly zero, which keeps
    # the square root from amplifying them to sqrt(eps).
    vals, vecs = np.linalg.eigh(m)
    cutoff = 4.0 * np.finfo(float).eps * np.max(np.abs(vals), initial=0.0)
    vals = np.where(vals < cutoff, 0.0, vals)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Uhlmann fidelity [Tr sqrt(sqrt(a) b sqrt(a))]^2, clipped to [0, 1].

    Evaluated as the squared sum of the singular values of
    sqrt(a) sqrt(b), which is the same quantity computed without squaring
    the conditioning (and is manifestly symmetric).
    """
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    sv = np.linalg.svd(_psd_sqrt(a.matrix) @ _psd_sqrt(b.matrix), compute_uv=False)
    f = float(sv.sum() ** 2)
    return min(max(f, 0.0), 1.0)


def concurrence(rho: DensityMatrix) -> float:
    """Two-qubit Wootters concurrence.

    max(0, l1 - l2 - l3 - l4) over the descending eigenvalues of
    R = sqrt(sqrt(rho) (Y x Y) rho* (Y x Y) sqrt(rho)).  Those eigenvalues
    equal the singular values of sqrt(rho) (Y x Y) sqrt(rho)*, which is how
    they are computed (avoids squaring the conditioning).
    """
    if rho.dim != 4:
        raise DimensionError("concurrence is defined for two-qubit states only")
    yy = np.kron(PAULI_Y, PAULI_Y)
    sr = _psd_sqrt(rho.matrix)
    lam = np.linalg.svd(sr @ yy @ sr.conj(), compute_uv=False)
    return max(0.0, float(lam[0] - lam[1] - lam[2] - lam[3]))


def partial_transpose(matrix: np.ndarray) -> np.ndarray:
    """Partial transpose of a two-qubit matrix over the second qubit."""
    m = matrix.reshape(2, 2, 2, 2)
    return m.transpose(0, 3, 2, 1).reshape(4, 4)


def is_entangled_ppt(rho: DensityMatrix, tol: float = PPT_TOL) -> bool:
    """True iff the partial transpose has an eigenvalue below -tol.

    Exact for 2x2 systems (Peres-Horodecki).
    """
    if rho.dim != 4:
        raise DimensionError("the PPT test is implemented for two-qubit states only")
    return bool(np.min(np.linalg.eigvalsh(partial_transpose(rho.matrix))) < -tol)


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Kronecker product of two states."""
    return DensityMatrix(np.kron(a.matrix, b.matrix))


def maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim, dtype=complex) / dim)
