"""Versioned binary persistence for states, tau vectors, and tomography
records.

Layout: magic "QFRG", u32 version, u32 record count, then one tagged record
after another (tag u8: 0 density matrix, 1 tau vector, 2 tomography record).
All floats are little-endian float64, so save/load roundtrips are
bit-identical.  Unknown versions and truncated files are refused.
"""

from __future__ import annotations

import struct
from typing import Sequence, Union

import numpy as np

from ..qcore import DensityMatrix, TauVector
from ..tomography import TomographyRecord, pauli_settings

MAGIC = b"QFRG"
VERSION = 1

TAG_DENSITY = 0
TAG_TAU = 1
TAG_RECORD = 2

Item = Union[DensityMatrix, TauVector, TomographyRecord]


class IntegrityError(IOError):
    """Corrupt, truncated, or version-mismatched dataset file."""


def _pack_complex(m: np.ndarray) -> bytes:
    flat = np.empty(m.size * 2, dtype="<f8")
    flat[0::2] = m.real.ravel()
    flat[1::2] = m.imag.ravel()
    return flat.tobytes()


def _unpack_complex(buf: bytes, dim: int) -> np.ndarray:
    flat = np.frombuffer(buf, dtype="<f8")
    return (flat[0::2] + 1j * flat[1::2]).reshape(dim, dim)


def _write_item(fh, item: Item) -> None:
    if isinstance(item, DensityMatrix):
        fh.write(struct.pack("<BI", TAG_DENSITY, item.dim))
        fh.write(_pack_complex(item.matrix))
    elif isinstance(item, TauVector):
        fh.write(struct.pack("<BI", TAG_TAU, len(item.values)))
        fh.write(item.values.astype("<f8").tobytes())
    elif isinstance(item, TomographyRecord):
        has_gt = item.ground_truth is not None
        fh.write(struct.pack("<BIQB", TAG_RECORD, item.qubits, item.shots, int(has_gt)))
        if has_gt:
            fh.write(_pack_complex(item.ground_truth.matrix))
        for setting in pauli_settings(item.qubits):
            fh.write(item.frequencies[setting].astype("<f8").tobytes())
    else:
        raise TypeError(f"cannot persist object of type {type(item).__name__}")


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) < n:
        raise IntegrityError("unexpected end of file (truncated dataset)")
    return buf


def _read_item(fh) -> Item:
    (tag,) = struct.unpack("<B", _read_exact(fh, 1))
    if tag == TAG_DENSITY:
        (dim,) = struct.unpack("<I", _read_exact(fh, 4))
        return DensityMatrix(_unpack_complex(_read_exact(fh, dim * dim * 16), dim))
    if tag == TAG_TAU:
        (length,) = struct.unpack("<I", _read_exact(fh, 4))
        return TauVector(np.frombuffer(_read_exact(fh, length * 8), dtype="<f8"))
    if tag == TAG_RECORD:
        qubits, shots, has_gt = struct.unpack("<IQB", _read_exact(fh, 13))
        dim = 2**qubits
        gt = None
        if has_gt:
            gt = DensityMatrix(_unpack_complex(_read_exact(fh, dim * dim * 16), dim))
        freqs = {
            s: np.frombuffer(_read_exact(fh, dim * 8), dtype="<f8").copy()
            for s in pauli_settings(qubits)
        }
        return TomographyRecord(qubits=qubits, shots=shots, frequencies=freqs, ground_truth=gt)
    raise IntegrityError(f"unknown record tag {tag}")


def dataset_save(path, items: Sequence[Item]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(items)))
        for item in items:
            _write_item(fh, item)


def dataset_load(path) -> list[Item]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise IntegrityError(f"not a dataset file (magic {magic!r})")
        version, count = struct.unpack("<II", _read_exact(fh, 8))
        if version != VERSION:
            raise IntegrityError(f"unsupported dataset version {version}")
        items = [_read_item(fh) for _ in range(count)]
        if fh.read(1):
            raise IntegrityError("trailing bytes after final record")
    return items
