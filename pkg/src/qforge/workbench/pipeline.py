"""Shared experiment machinery: dataset preparation, repeat training, and
batched evaluation.

The batched metric helpers operate on raw (n, D, D) arrays for speed; the
per-state implementations in ``qforge.qcore`` stay authoritative and the
test suite checks the two against each other.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .. import neuralnet as nn
from ..engineer import BandpassSpec
from ..qcore import DensityMatrix, TauVector, tau_encode
from ..tomography import (
    NoiseSpec,
    TomographyRecord,
    build_nisq_test_set,
    ideal_probabilities,
    linear_inversion,
    mle_project,
    read_counts_file,
    sample_counts,
)
from .config import RunConfig, derive_rng, derive_seed

# -- batched metrics -------------------------------------------------------


def decode_tau_batch(taus: np.ndarray, qubits: int) -> np.ndarray:
    """Vectorized tau -> density matrix over a (n, 4^d) array.

    Total on its domain: an (unreachable in practice) all-zero row decodes
    to the maximally mixed state instead of raising like ``tau_decode``.
    """
    dim = 2**qubits
    taus = np.asarray(taus, dtype=float)
    n = taus.shape[0]
    zeta = np.zeros((n, dim, dim), dtype=complex)
    for i in range(dim):
        zeta[:, i, i] = taus[:, i]
    offdiag = [(i, i - k) for k in range(1, dim) for i in range(k, dim)]
    for m, (i, j) in enumerate(offdiag):
        zeta[:, i, j] = taus[:, dim + 2 * m] + 1j * taus[:, dim + 2 * m + 1]
    w = zeta @ zeta.conj().transpose(0, 2, 1)
    tr = np.einsum("nii->n", w).real
    degenerate = tr <= 0.0
    w /= np.where(degenerate, 1.0, tr)[:, None, None]
    if degenerate.any():
        w[degenerate] = np.eye(dim) / dim
    return w


def psd_sqrt_batch(mats: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mats)
    cutoff = 4.0 * np.finfo(float).eps * np.abs(vals).max(axis=1, keepdims=True)
    vals = np.sqrt(np.where(vals < cutoff, 0.0, vals))
    return (vecs * vals[:, None, :]) @ vecs.conj().transpose(0, 2, 1)


def fidelity_batch(gt_sqrts: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """Uhlmann fidelity of each prediction against its (pre-square-rooted)
    ground truth."""
    inner = gt_sqrts @ preds @ gt_sqrts
    inner = 0.5 * (inner + inner.conj().transpose(0, 2, 1))
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    return np.clip(np.sqrt(vals).sum(axis=1) ** 2, 0.0, 1.0)


def purity_batch(mats: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(mats) ** 2, axis=(1, 2))


def concurrence_batch(mats: np.ndarray) -> np.ndarray:
    yy = np.array(
        [[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex
    )
    sr = psd_sqrt_batch(mats)
    lam = np.linalg.svd(sr @ yy @ sr.conj(), compute_uv=False)
    return np.maximum(0.0, 2.0 * lam[:, 0] - lam.sum(axis=1))


def ppt_entangled_batch(mats: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    pt = mats.reshape(-1, 2, 2, 2, 2).transpose(0, 1, 4, 3, 2).reshape(-1, 4, 4)
    return np.linalg.eigvalsh(pt)[:, 0] < -tol


# -- dataset preparation ---------------------------------------------------


def states_to_records(
    states: Sequence[DensityMatrix],
    qubits: int,
    shots: int,
    rng: Optional[np.random.Generator],
) -> list[TomographyRecord]:
    """Simulated measurement records, ideal (shots=0) or shot-sampled."""
    records = [ideal_probabilities(s, qubits) for s in states]
    if shots > 0:
        records = [sample_counts(r, shots, rng) for r in records]
    return records


def records_to_dataset(
    records: Sequence[TomographyRecord],
    states: Sequence[DensityMatrix],
) -> list[tuple[np.ndarray, TauVector]]:
    return [(nn.record_to_grid(r), tau_encode(s)) for r, s in zip(records, states)]


def grids_of(records: Sequence[TomographyRecord]) -> np.ndarray:
    return np.stack([nn.record_to_grid(r) for r in records])


# -- repeat training -------------------------------------------------------


def _fit_trial(args):
    net_cfg, dtype, dataset, train_cfg, seed, blas_threads = args
    rng = np.random.default_rng(seed)

    def run():
        net = nn.Network(net_cfg, rng, dtype=np.dtype(dtype))
        return nn.train(net, dataset, train_cfg, rng)

    if blas_threads is not None:
        # Pool workers pin their BLAS to avoid oversubscription; results are
        # identical either way, only scheduling changes.
        try:
            from threadpoolctl import threadpool_limits
        except ImportError:
            return run()
        with threadpool_limits(limits=blas_threads):
            return run()
    return run()


def train_trials(
    dataset: Sequence[tuple[np.ndarray, TauVector]],
    net_cfg: nn.NetConfig,
    cfg: RunConfig,
    label: str,
    learning_rate: Optional[float] = None,
) -> list[nn.Network]:
    """Train `cfg.trials` independently seeded nets on one dataset.

    Trial seeds derive from (master seed, condition label, trial index), so
    results are independent of worker count and of the other conditions.
    """
    train_cfg = nn.TrainConfig(
        learning_rate=learning_rate if learning_rate is not None else cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        optimizer=cfg.optimizer,
        trials=cfg.trials,
    )
    blas = 1 if cfg.workers > 1 else None
    jobs = [
        (net_cfg, cfg.dtype, dataset, train_cfg,
         derive_seed(cfg.seed, label, "trial", i), blas)
        for i in range(cfg.trials)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            fitted = list(pool.map(_fit_trial, jobs))
    else:
        fitted = [_fit_trial(job) for job in jobs]
    return [net for net, _ in fitted]


def predict_averaged(nets: Sequence[nn.Network], grids: np.ndarray) -> np.ndarray:
    """Trial-averaged predicted density matrices (entrywise mean, trace
    renormalized), shape (n, D, D)."""
    qubits = nets[0].config.qubits
    acc = None
    for net in nets:
        out, _ = net.forward_batch(grids)
        rhos = decode_tau_batch(np.asarray(out, dtype=float), qubits)
        acc = rhos if acc is None else acc + rhos
    acc /= len(nets)
    tr = np.einsum("nii->n", acc).real
    acc /= tr[:, None, None]
    return 0.5 * (acc + acc.conj().transpose(0, 2, 1))


# -- test sets -------------------------------------------------------------


def bandpass_spec(cfg: RunConfig) -> BandpassSpec:
    return BandpassSpec(cfg.band_p_min, cfg.band_p_max, cfg.band_c_min, cfg.band_c_max)


def noise_spec(cfg: RunConfig) -> NoiseSpec:
    return NoiseSpec(cfg.noise_qubit_strength, cfg.noise_global_min, cfg.noise_global_max)


def nisq_test_set(
    cfg: RunConfig, shots: Optional[int] = None
) -> list[tuple[DensityMatrix, TomographyRecord]]:
    """Emulated or counts-file-derived test set at the requested shot level.

    Counts files carry no ground truth; as on hardware, the MLE state
    reconstructed from the recorded counts serves as ground truth and is
    then re-measured synthetically.
    """
    shots = cfg.test_shots if shots is None else shots
    rng = derive_rng(cfg.seed, "nisq-test")
    if cfg.test_source == "emulated":
        return build_nisq_test_set(
            n=cfg.n_nisq_test, shots=shots, noise=noise_spec(cfg), rng=rng, qubits=2
        )
    out = []
    for record in read_counts_file(cfg.counts_path):
        gt = mle_project(linear_inversion(record))
        ideal = ideal_probabilities(gt, record.qubits)
        out.append((gt, ideal if shots == 0 else sample_counts(ideal, shots, rng)))
    return out
