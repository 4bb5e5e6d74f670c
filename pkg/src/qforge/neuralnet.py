"""From-scratch convolutional regression network emitting tau vectors.

Stack: 2x2 conv (stride 1, SAME padding, ReLU, 25 filters) -> 2x2 max pool
(stride 2, VALID) -> flatten -> dense+ReLU -> dropout(0.5) -> dense+ReLU ->
dropout(0.5) -> linear dense with 4^d outputs.

All forward/backward passes are plain numpy; gradients are exact (max-pool
routes through the argmax, dropout masks are part of the cache) and checked
against finite differences in the test suite.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .qcore import DensityMatrix, TauVector, tau_decode
from .tomography import TomographyRecord, pauli_settings

try:
    import numba

    # workqueue avoids the noisy TBB-version probe; scheduling only, results
    # are identical
    numba.config.THREADING_LAYER = "workqueue"

    @numba.njit(parallel=True, cache=True)
    def _adam_kernel(p, g, m, v, lr, b1, b2, eps, c1, c2):  # pragma: no cover
        for i in numba.prange(p.size):
            gi = g[i]
            m[i] = b1 * m[i] + (1.0 - b1) * gi
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
            p[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

CHECKPOINT_MAGIC = b"QFNN"
CHECKPOINT_VERSION = 1

PARAM_ORDER = ("conv_w", "conv_b", "w1", "b1", "w2", "b2", "w3", "b3")


class TrainingError(RuntimeError):
    """Empty dataset, divergence, or checkpoint corruption."""


@dataclass(frozen=True)
class NetConfig:
    """Architecture knobs; conv/pool geometry is fixed by design."""

    qubits: int = 2
    dense1: int = 1050
    dense2: int = 650
    conv_filters: int = 25
    kernel: tuple[int, int] = (2, 2)
    pool: tuple[int, int] = (2, 2)
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.qubits < 2:
            raise ValueError("networks are defined for d >= 2 qubits")
        if self.dense1 < 1 or self.dense2 < 1:
            raise ValueError("dense layer sizes must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def grid_shape(self) -> tuple[int, int]:
        d = self.qubits
        return (6 ** ((d + 1) // 2), 6 ** (d // 2))

    @property
    def pooled_shape(self) -> tuple[int, int]:
        h, w = self.grid_shape
        return (h // self.pool[0], w // self.pool[1])

    @property
    def flat_size(self) -> int:
        ph, pw = self.pooled_shape
        return ph * pw * self.conv_filters

    @property
    def output_size(self) -> int:
        return 4**self.qubits


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.008
    epochs: int = 400
    batch_size: int = 128
    optimizer: str = "adam"
    seed: int = 0
    trials: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def param_count(cfg: NetConfig) -> int:
    """Total trainable parameters (weights + biases, all layers)."""
    kh, kw = cfg.kernel
    conv = cfg.conv_filters * (kh * kw) + cfg.conv_filters
    d1 = cfg.flat_size * cfg.dense1 + cfg.dense1
    d2 = cfg.dense1 * cfg.dense2 + cfg.dense2
    d3 = cfg.dense2 * cfg.output_size + cfg.output_size
    return conv + d1 + d2 + d3


def record_to_grid(record: TomographyRecord) -> np.ndarray:
    """Lay the 6^d frequencies out on the fixed 2-D grid.

    Row index is the lexicographic rank of the leading ceil(d/2) qubits'
    (setting, outcome) pairs, with pairs ordered X0 < X1 < Y0 < Y1 < Z0 < Z1;
    the column index covers the remaining qubits the same way.
    """
    d = record.qubits
    row_qubits = (d + 1) // 2
    grid = np.zeros((6**row_qubits, 6 ** (d - row_qubits)))
    outcomes = np.arange(2**d)
    bits = [(outcomes >> (d - 1 - j)) & 1 for j in range(d)]
    for setting in pauli_settings(d):
        labels = ["XYZ".index(c) for c in setting]
        rows = np.zeros(2**d, dtype=int)
        cols = np.zeros(2**d, dtype=int)
        for j in range(row_qubits):
            rows = rows * 6 + (2 * labels[j] + bits[j])
        for j in range(row_qubits, d):
            cols = cols * 6 + (2 * labels[j] + bits[j])
        grid[rows, cols] = record.frequencies[setting]
    return grid


def _he_uniform(rng, fan_in, shape, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _glorot_uniform(rng, fan_in, fan_out, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Network:
    """Parameter container plus forward/backward passes."""

    def __init__(self, config: NetConfig, rng: np.random.Generator, dtype=np.float64):
        self.config = config
        self.dtype = np.dtype(dtype)
        kh, kw = config.kernel
        f = config.conv_filters
        self.params = {
            "conv_w": _he_uniform(rng, kh * kw, (kh * kw, f), self.dtype),
            "conv_b": np.zeros(f, dtype=self.dtype),
            "w1": _he_uniform(rng, config.flat_size, (config.flat_size, config.dense1), self.dtype),
            "b1": np.zeros(config.dense1, dtype=self.dtype),
            "w2": _he_uniform(rng, config.dense1, (config.dense1, config.dense2), self.dtype),
            "b2": np.zeros(config.dense2, dtype=self.dtype),
            "w3": _glorot_uniform(rng, config.dense2, config.output_size,
                                  (config.dense2, config.output_size), self.dtype),
            "b3": np.zeros(config.output_size, dtype=self.dtype),
        }

    # -- forward ---------------------------------------------------------

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        # SAME padding for stride 1: pad (kernel - 1) on the bottom/right.
        b, h, w = x.shape
        kh, kw = self.config.kernel
        xp = np.zeros((b, h + kh - 1, w + kw - 1), dtype=self.dtype)
        xp[:, :h, :w] = x
        cols = np.empty((b, h, w, kh * kw), dtype=self.dtype)
        for i in range(kh):
            for j in range(kw):
                cols[..., i * kw + j] = xp[:, i : i + h, j : j + w]
        return cols

    def forward_batch(
        self,
        x: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
        masks: Optional[tuple[np.ndarray, np.ndarray]] = None,
    ):
        """Run a (B, H, W) batch; returns (output, cache for backward)."""
        cfg = self.config
        p = self.params
        x = np.ascontiguousarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != cfg.grid_shape:
            raise ValueError(f"expected grids of shape {cfg.grid_shape}, got {x.shape[1:]}")
        b, h, w = x.shape

        cols = self._im2col(x)
        conv_z = cols @ p["conv_w"] + p["conv_b"]
        conv_a = np.maximum(conv_z, 0.0)

        ph, pw = cfg.pooled_shape
        kh, kw = cfg.pool
        windows = (
            conv_a[:, : ph * kh, : pw * kw, :]
            .reshape(b, ph, kh, pw, kw, cfg.conv_filters)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(b, ph, pw, cfg.conv_filters, kh * kw)
        )
        pool_idx = np.argmax(windows, axis=-1)
        pooled = np.take_along_axis(windows, pool_idx[..., None], axis=-1)[..., 0]
        flat = pooled.reshape(b, cfg.flat_size)

        z1 = flat @ p["w1"] + p["b1"]
        a1 = np.maximum(z1, 0.0)
        if training:
            if masks is not None:
                m1, m2 = masks
            else:
                if rng is None:
                    raise TrainingError("training-mode forward needs an rng (or fixed masks)")
                m1 = self.draw_mask(rng, (b, cfg.dense1))
                m2 = self.draw_mask(rng, (b, cfg.dense2))
        else:
            m1 = m2 = None
        h1 = a1 * m1 if m1 is not None else a1

        z2 = h1 @ p["w2"] + p["b2"]
        a2 = np.maximum(z2, 0.0)
        h2 = a2 * m2 if m2 is not None else a2

        out = h2 @ p["w3"] + p["b3"]
        cache = (x, cols, conv_z, pool_idx, flat, z1, m1, h1, z2, m2, h2)
        return out, cache

    def draw_mask(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Inverted-dropout mask: keep with prob 1-rate, scaled by 1/(1-rate)."""
        rate = self.config.dropout_rate
        draw_dtype = np.float32 if self.dtype == np.float32 else np.float64
        keep = (rng.random(shape, dtype=draw_dtype) >= rate).astype(self.dtype)
        return keep / self.dtype.type(1.0 - rate)

    # -- backward --------------------------------------------------------

    def backward_batch(self, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        cfg = self.config
        p = self.params
        x, cols, conv_z, pool_idx, flat, z1, m1, h1, z2, m2, h2 = cache
        b = x.shape[0]

        grads = {}
        grads["w3"] = h2.T @ grad_out
        grads["b3"] = grad_out.sum(axis=0)
        dh2 = grad_out @ p["w3"].T
        da2 = dh2 * m2 if m2 is not None else dh2
        dz2 = da2 * (z2 > 0)

        grads["w2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["w2"].T
        da1 = dh1 * m1 if m1 is not None else dh1
        dz1 = da1 * (z1 > 0)

        grads["w1"] = flat.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        dflat = dz1 @ p["w1"].T

        ph, pw = cfg.pooled_shape
        kh, kw = cfg.pool
        dpooled = dflat.reshape(b, ph, pw, cfg.conv_filters)
        dwindows = np.zeros((b, ph, pw, cfg.conv_filters, kh * kw), dtype=self.dtype)
        np.put_along_axis(dwindows, pool_idx[..., None], dpooled[..., None], axis=-1)
        h, w = cfg.grid_shape
        dconv_a = np.zeros((b, h, w, cfg.conv_filters), dtype=self.dtype)
        dconv_a[:, : ph * kh, : pw * kw, :] = (
            dwindows.reshape(b, ph, pw, cfg.conv_filters, kh, kw)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(b, ph * kh, pw * kw, cfg.conv_filters)
        )
        dconv_z = dconv_a * (conv_z > 0)
        grads["conv_w"] = cols.reshape(-1, cols.shape[-1]).T @ dconv_z.reshape(-1, cfg.conv_filters)
        grads["conv_b"] = dconv_z.sum(axis=(0, 1, 2))
        return grads

    def loss(self, x, target, masks=None, rng=None, training=False):
        out, cache = self.forward_batch(x, training=training, rng=rng, masks=masks)
        return loss_mse(out, target), out, cache


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error, averaged over components and batch."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            m, v, p = self.m[k], self.v[k], params[k]
            if _HAVE_NUMBA:
                _adam_kernel(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                             m.reshape(-1), v.reshape(-1),
                             self.lr, self.b1, self.b2, self.eps, c1, c2)
            else:
                np.multiply(m, self.b1, out=m)
                m += (1.0 - self.b1) * g
                np.multiply(v, self.b2, out=v)
                v += (1.0 - self.b2) * g * g
                p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


class _SGD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


def _stack_dataset(dataset, dtype):
    xs, ts = [], []
    for grid, tau in dataset:
        xs.append(np.asarray(grid, dtype=dtype))
        ts.append(tau.values if isinstance(tau, TauVector) else np.asarray(tau))
    return np.stack(xs), np.stack(ts).astype(dtype)


def train(
    net: Network,
    dataset: Sequence[tuple[np.ndarray, TauVector]],
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[Network, list[float]]:
    """Minibatch training; returns the net and the per-epoch loss history.

    Deterministic given (net parameters, dataset order, cfg.seed): the rng
    drives shuffling and dropout masks only.
    """
    if len(dataset) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    x, t = _stack_dataset(dataset, net.dtype)
    n = x.shape[0]
    opt = _Adam(net.params, cfg.learning_rate) if cfg.optimizer == "adam" else _SGD(net.params, cfg.learning_rate)

    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb, tb = x[idx], t[idx]
            out, cache = net.forward_batch(xb, training=True, rng=rng)
            batch_loss = loss_mse(out, tb)
            if not np.isfinite(batch_loss):
                raise TrainingError(f"training diverged (non-finite loss) at epoch {epoch}")
            total += batch_loss * len(idx)
            grad_out = (2.0 / out.size) * (out - tb).astype(net.dtype)
            grads = net.backward_batch(cache, grad_out)
            opt.step(net.params, grads)
        history.append(total / n)
    return net, history


def forward(
    net: Network,
    grid: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> TauVector:
    """Single-grid forward pass; inference is deterministic."""
    out, _ = net.forward_batch(grid[None], training=training, rng=rng)
    return TauVector(np.asarray(out[0], dtype=float))


def reconstruct(net: Network, record: TomographyRecord) -> DensityMatrix:
    """Record -> grid -> tau -> density matrix (always physical)."""
    return tau_decode(forward(net, record_to_grid(record)))


def reconstruct_averaged(nets: Sequence[Network], record: TomographyRecord) -> DensityMatrix:
    """Average the per-trial predicted density matrices entrywise and
    renormalize the trace (the repeat-training protocol)."""
    if not nets:
        raise TrainingError("no networks to average")
    acc = np.zeros((2 ** record.qubits,) * 2, dtype=complex)
    for net in nets:
        acc += reconstruct(net, record).matrix
    acc /= np.trace(acc).real
    return DensityMatrix(0.5 * (acc + acc.conj().T))


# -- checkpoints ----------------------------------------------------------


def save_checkpoint(net: Network, path) -> None:
    """Versioned binary: magic, version, config JSON, float64 param blocks."""
    cfg = net.config
    header = {
        "qubits": cfg.qubits,
        "dense1": cfg.dense1,
        "dense2": cfg.dense2,
        "conv_filters": cfg.conv_filters,
        "kernel": list(cfg.kernel),
        "pool": list(cfg.pool),
        "dropout_rate": cfg.dropout_rate,
        "dtype": net.dtype.name,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for key in PARAM_ORDER:
            fh.write(np.ascontiguousarray(net.params[key], dtype="<f8").tobytes())


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise TrainingError(f"not a checkpoint file (magic {magic!r})")
        raw = fh.read(8)
        if len(raw) < 8:
            raise TrainingError("truncated checkpoint header")
        version, blob_len = struct.unpack("<II", raw)
        if version != CHECKPOINT_VERSION:
            raise TrainingError(f"unsupported checkpoint version {version}")
        blob = fh.read(blob_len)
        if len(blob) < blob_len:
            raise TrainingError("truncated checkpoint header")
        header = json.loads(blob)
        cfg = NetConfig(
            qubits=header["qubits"],
            dense1=header["dense1"],
            dense2=header["dense2"],
            conv_filters=header["conv_filters"],
            kernel=tuple(header["kernel"]),
            pool=tuple(header["pool"]),
            dropout_rate=header["dropout_rate"],
        )
        net = Network(cfg, np.random.default_rng(0), dtype=np.dtype(header["dtype"]))
        for key in PARAM_ORDER:
            shape = net.params[key].shape
            n_bytes = int(np.prod(shape)) * 8
            raw = fh.read(n_bytes)
            if len(raw) < n_bytes:
                raise TrainingError(f"truncated checkpoint: parameter block {key}")
            net.params[key] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(net.dtype)
        if fh.read(1):
            raise TrainingError("trailing bytes after final parameter block")
    return net
