"""Pauli tomography: ideal and finite-shot simulation, linear inversion,
MLE projection, and a depolarizing-channel stand-in for NISQ hardware.

Measurement model: for d qubits there are 3^d settings (a basis label from
{X, Y, Z} per qubit, enumerated lexicographically with X < Y < Z), each with
2^d outcomes ordered big-endian over qubit indices (bit 0 of the outcome
index belongs to qubit 0 and selects that qubit's +1/-1 eigenvector).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .qcore import (
    PAULI_I,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    DensityMatrix,
    PureState,
)
from .ensembles import haar_pure

BASIS_LABELS = "XYZ"
FREQ_SUM_TOL = 1e-9

# Eigenvectors with the largest-magnitude component real-positive; columns
# ordered (+1, -1) so outcome bit 0 means the +1 eigenvector.
_EIGENVECTORS = {
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0),
    "Y": np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2.0),
    "Z": np.array([[1, 0], [0, 1]], dtype=complex),
}
_PAULI = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


class TomographyConfigError(ValueError):
    """Bad shot count, malformed record, or unreadable counts file."""


def pauli_settings(qubits: int) -> list[str]:
    """All 3^d measurement settings in lexicographic order."""
    return ["".join(p) for p in itertools.product(BASIS_LABELS, repeat=qubits)]


@lru_cache(maxsize=None)
def setting_vectors(setting: str) -> np.ndarray:
    """(2^d, 2^d) array: row m is the outcome-m product eigenvector."""
    d = len(setting)
    vecs = np.ones((1, 1), dtype=complex)
    for label in setting:
        vecs = np.kron(vecs, _EIGENVECTORS[label].T)
    assert vecs.shape == (2**d, 2**d)
    return vecs


@dataclass(frozen=True)
class TomographyRecord:
    """Per-state measurement frequencies over all settings.

    `shots` = 0 encodes ideal (infinite-shot) Born probabilities.
    """

    qubits: int
    shots: int
    frequencies: dict[str, np.ndarray] = field(repr=False)
    ground_truth: Optional[DensityMatrix] = None

    def __post_init__(self):
        expected = pauli_settings(self.qubits)
        if sorted(self.frequencies) != sorted(expected):
            raise TomographyConfigError(
                f"record must carry all {len(expected)} settings for d={self.qubits}"
            )
        if self.shots < 0:
            raise TomographyConfigError("shots must be >= 0")
        converted = {}
        for s, f in self.frequencies.items():
            f = np.asarray(f, dtype=float)
            if f.shape != (2**self.qubits,) or np.any(f < 0):
                raise TomographyConfigError(f"bad frequency vector for setting {s}")
            if abs(f.sum() - 1.0) > FREQ_SUM_TOL:
                raise TomographyConfigError(f"frequencies for {s} sum to {f.sum()}, not 1")
            f.setflags(write=False)
            converted[s] = f
        object.__setattr__(self, "frequencies", converted)


def born_probabilities(rho: DensityMatrix, setting: str) -> np.ndarray:
    vecs = setting_vectors(setting)
    p = np.einsum("mi,ij,mj->m", vecs.conj(), rho.matrix, vecs).real
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def ideal_probabilities(rho: DensityMatrix, qubits: int) -> TomographyRecord:
    """Exact Born-rule record over all settings (shots = 0)."""
    if rho.dim != 2**qubits:
        raise TomographyConfigError(f"state dim {rho.dim} does not match d={qubits}")
    freqs = {s: born_probabilities(rho, s) for s in pauli_settings(qubits)}
    return TomographyRecord(qubits=qubits, shots=0, frequencies=freqs, ground_truth=rho)


def sample_counts(record: TomographyRecord, shots: int, rng: np.random.Generator) -> TomographyRecord:
    """Resample a record at a finite shot count (multinomial per setting)."""
    if shots < 1:
        raise TomographyConfigError("shots must be >= 1 for finite-shot sampling")
    freqs = {
        s: rng.multinomial(shots, p) / shots
        for s, p in record.frequencies.items()
    }
    return TomographyRecord(
        qubits=record.qubits, shots=shots, frequencies=freqs,
        ground_truth=record.ground_truth,
    )


def _pauli_string_matrix(string: str) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for label in string:
        m = np.kron(m, _PAULI[label])
    return m


def _outcome_signs(qubits: int, support: tuple[int, ...]) -> np.ndarray:
    # (-1)^(parity of outcome bits on the support), outcomes big-endian.
    m = np.arange(2**qubits)
    signs = np.ones(2**qubits)
    for j in support:
        bit = (m >> (qubits - 1 - j)) & 1
        signs *= np.where(bit, -1.0, 1.0)
    return signs


def linear_inversion(record: TomographyRecord) -> np.ndarray:
    """Pauli-basis estimate rho_hat = 2^-d  sum_s <sigma_s> sigma_s.

    Each Pauli-string expectation is averaged over every setting that
    measures it (all data used, unbiased); the identity string is fixed at 1.
    Output is Hermitian with unit trace but may be non-PSD at finite shots.
    """
    d = record.qubits
    dim = 2**d
    rho = np.zeros((dim, dim), dtype=complex)
    for string in itertools.product("IXYZ", repeat=d):
        support = tuple(j for j, c in enumerate(string) if c != "I")
        if not support:
            expectation = 1.0
        else:
            signs = _outcome_signs(d, support)
            values = [
                float(record.frequencies[s] @ signs)
                for s in pauli_settings(d)
                if all(s[j] == string[j] for j in support)
            ]
            expectation = float(np.mean(values))
        rho += expectation * _pauli_string_matrix("".join(string))
    rho /= dim
    return 0.5 * (rho + rho.conj().T)


def project_to_simplex(eigvals: np.ndarray) -> np.ndarray:
    """Project eigenvalues onto the probability simplex.

    Ascending scan: each negative (adjusted) eigenvalue is zeroed and its
    value spread equally over all eigenvalues above it.  Equivalent to the
    Euclidean projection of the spectrum.
    """
    vals = np.asarray(eigvals, dtype=float).copy()
    order = np.argsort(vals)
    spread = 0.0
    for rank, idx in enumerate(order):
        remaining = len(vals) - rank
        if vals[idx] + spread / remaining < 0.0:
            spread += vals[idx]
            vals[idx] = 0.0
        else:
            vals[order[rank:]] += spread / remaining
            break
    else:
        # Every eigenvalue went negative-adjusted; renormalize the residue
        # onto the last (largest) one.  Unreachable for unit-trace input.
        vals[order[-1]] = 1.0
    return vals


def mle_project(hermitian: np.ndarray) -> DensityMatrix:
    """Nearest density matrix (Frobenius) to a Hermitian unit-trace estimate.

    Eigenbasis is preserved; the spectrum is projected onto the simplex.
    PSD inputs are fixed points.
    """
    m = np.asarray(hermitian, dtype=complex)
    m = 0.5 * (m + m.conj().T)
    tr = np.trace(m).real
    if abs(tr) < 1e-12:
        raise TomographyConfigError("estimate has (near-)zero trace")
    m = m / tr
    vals, vecs = np.linalg.eigh(m)
    if vals.min() >= 0.0:
        return DensityMatrix(m)
    new_vals = project_to_simplex(vals)
    out = (vecs * new_vals) @ vecs.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T))


@dataclass(frozen=True)
class NoiseSpec:
    """Depolarizing stand-in for hardware noise.

    Each qubit is independently replaced by the maximally mixed qubit with
    probability `qubit_strength`; then the whole state is mixed with I/D at
    a per-state rate drawn uniformly from [global_min, global_max].  The
    defaults put two-qubit output purities in roughly [0.68, 0.96].
    """

    qubit_strength: float = 0.02
    global_min: float = 0.0
    global_max: float = 0.19

    def __post_init__(self):
        if not 0.0 <= self.qubit_strength <= 1.0:
            raise TomographyConfigError("qubit_strength must lie in [0, 1]")
        if not 0.0 <= self.global_min <= self.global_max <= 1.0:
            raise TomographyConfigError("need 0 <= global_min <= global_max <= 1")


def _depolarize_qubit(rho: np.ndarray, qubit: int, qubits: int, p: float) -> np.ndarray:
    if p == 0.0:
        return rho
    twirl = np.zeros_like(rho)
    for pauli in (PAULI_X, PAULI_Y, PAULI_Z):
        ops = [PAULI_I] * qubits
        ops[qubit] = pauli
        full = ops[0]
        for o in ops[1:]:
            full = np.kron(full, o)
        twirl += full @ rho @ full.conj().T
    return (1.0 - p) * rho + p * (rho + twirl) / 4.0


def emulate_nisq_state(target: PureState, noise: NoiseSpec, rng: np.random.Generator) -> DensityMatrix:
    """Mixed state a noisy device would prepare in place of `target`."""
    d = int(round(np.log2(target.dim)))
    if 2**d != target.dim:
        raise TomographyConfigError("target dimension must be a power of two")
    rho = np.outer(target.amplitudes, target.amplitudes.conj())
    for j in range(d):
        rho = _depolarize_qubit(rho, j, d, noise.qubit_strength)
    q = rng.uniform(noise.global_min, noise.global_max)
    rho = (1.0 - q) * rho + q * np.eye(target.dim) / target.dim
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def build_nisq_test_set(
    n: int = 500,
    shots: int = 1024,
    noise: NoiseSpec = NoiseSpec(),
    rng: Optional[np.random.Generator] = None,
    qubits: int = 2,
    characterization_shots: int = 8192,
) -> list[tuple[DensityMatrix, TomographyRecord]]:
    """Emulated-hardware test set with known ground truths.

    Pipeline per state: Haar pure target -> noisy preparation -> simulated
    tomography at `characterization_shots` -> linear inversion -> MLE
    projection (this is the ground truth) -> fresh tomography of the ground
    truth at the requested `shots` (0 = ideal).
    """
    if rng is None:
        raise TomographyConfigError("an explicit rng is required")
    out = []
    for _ in range(n):
        target = haar_pure(2**qubits, rng)
        prepared = emulate_nisq_state(target, noise, rng)
        characterized = sample_counts(
            ideal_probabilities(prepared, qubits), characterization_shots, rng
        )
        ground_truth = mle_project(linear_inversion(characterized))
        ideal = ideal_probabilities(ground_truth, qubits)
        record = ideal if shots == 0 else sample_counts(ideal, shots, rng)
        out.append((ground_truth, record))
    return out


def write_counts_file(path, records: list[TomographyRecord], shots_per_record=None):
    """JSON-lines counts export: {"qubits", "shots", "counts": {setting: [...]}}.

    Ideal records (shots = 0) need an explicit `shots_per_record` to scale
    their probabilities into integer counts.
    """
    with open(path, "w") as fh:
        for rec in records:
            shots = rec.shots if rec.shots > 0 else shots_per_record
            if not shots or shots < 1:
                raise TomographyConfigError(
                    "exporting an ideal record requires shots_per_record >= 1"
                )
            counts = {
                s: [int(round(v * shots)) for v in rec.frequencies[s]]
                for s in pauli_settings(rec.qubits)
            }
            fh.write(json.dumps({"qubits": rec.qubits, "shots": shots, "counts": counts}) + "\n")


def read_counts_file(path) -> list[TomographyRecord]:
    """Ingest integer counts; totals may differ per setting (hardware reality)
    and are normalized per setting."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                qubits = int(obj["qubits"])
                shots = int(obj["shots"])
                counts = obj["counts"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TomographyConfigError(f"{path}:{lineno}: malformed counts line: {exc}")
            expected = pauli_settings(qubits)
            if sorted(counts) != sorted(expected):
                raise TomographyConfigError(
                    f"{path}:{lineno}: need all {len(expected)} settings for d={qubits}"
                )
            freqs = {}
            for s in expected:
                c = np.asarray(counts[s], dtype=float)
                if c.shape != (2**qubits,) or np.any(c < 0) or c.sum() <= 0:
                    raise TomographyConfigError(f"{path}:{lineno}: bad counts for {s}")
                freqs[s] = c / c.sum()
            records.append(TomographyRecord(qubits=qubits, shots=shots, frequencies=freqs))
    return records
