"""Run configuration: scale presets, JSON loading, and seed derivation.

Every experiment is a pure function of (RunConfig, master seed).  Condition
seeds derive from the master seed by hashing the condition labels, so adding
a condition never perturbs the randomness of the others.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

EXPERIMENT_IDS = ("spurious", "distributions", "shots", "heterogeneity", "appendix")

# Full model-size grid of the two-qubit parameter-count table.
PAPER_NET_SIZES = [
    (50, 25), (150, 75), (250, 150), (350, 200), (450, 250),
    (550, 300), (650, 350), (750, 400), (850, 450), (950, 550),
    (1050, 650), (1550, 900), (2050, 1150), (2550, 1400), (3050, 1650),
]
DESK_NET_SIZES = [(250, 150), (1050, 650), (3050, 1650)]

# Mixture-test parameters per qubit count: test-set (alpha, K) and the
# training K sweep.
HETEROGENEITY_TEST = {2: (0.1, 4), 3: (0.03, 8), 4: (0.015, 16)}
HETEROGENEITY_K = {2: [4, 5, 6, 7], 3: [8, 9, 10, 11], 4: [16, 19, 22, 25]}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Inputs of one experiment run; serializes losslessly to JSON."""

    experiment: str = "distributions"
    seed: int = 2024
    scale: str = "desk"
    out_dir: str = "runs"
    workers: int = 1

    # training-set and optimizer settings (filled by the scale preset when
    # left at None)
    n_train: Optional[int] = None
    epochs: Optional[int] = None
    trials: Optional[int] = None
    learning_rate: Optional[float] = None
    batch_size: int = 128
    optimizer: str = "adam"
    dtype: str = "float32"
    net_sizes: Optional[list[tuple[int, int]]] = None

    # test sets
    n_nisq_test: int = 500
    n_property_test: int = 5000
    test_shots: int = 1024
    test_source: str = "emulated"          # emulated | counts-file
    counts_path: Optional[str] = None
    noise_qubit_strength: float = 0.02
    noise_global_min: float = 0.0
    noise_global_max: float = 0.19

    # engineering
    band_p_min: float = 0.68
    band_p_max: float = 0.96
    band_c_min: float = 0.0
    band_c_max: float = 0.86
    sample_k: int = 6
    # mixture concentration for the unfiltered comparison set; None means
    # "invert the purity expectation at band_p_min"
    ma_alpha: Optional[float] = None

    # single-size experiments (spurious / shots / heterogeneity) use this
    # net; None means the scale preset's choice
    single_net: Optional[tuple[int, int]] = None

    # experiment-specific grids
    ns_fractions: list[float] = field(
        default_factory=lambda: [i * 250 / 30000 for i in range(8)]
    )
    shots_list: list[int] = field(default_factory=lambda: [128, 512, 2048, 8192])
    qubit_list: list[int] = field(default_factory=lambda: [2])
    # heterogeneity training-K sweep; None means the per-d table
    het_k_values: Optional[list[int]] = None
    appendix_sections: list[str] = field(default_factory=lambda: ["C", "D", "F"])
    k_sweep: list[int] = field(default_factory=lambda: [4, 5, 6, 7, 8])
    eta_grid: list[float] = field(
        default_factory=lambda: [0.0008, 0.002, 0.008, 0.02, 0.05]
    )
    purity_means: list[float] = field(default_factory=lambda: [0.55, 0.62, 0.68, 0.75])

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_IDS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; choose from {EXPERIMENT_IDS}"
            )
        if self.scale not in ("desk", "paper"):
            raise ConfigError("scale must be 'desk' or 'paper'")
        if self.test_source not in ("emulated", "counts-file"):
            raise ConfigError("test_source must be 'emulated' or 'counts-file'")
        if self.test_source == "counts-file" and not self.counts_path:
            raise ConfigError("counts-file test source needs counts_path")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self._apply_scale()
        self.net_sizes = [tuple(s) for s in self.net_sizes]
        self.single_net = tuple(self.single_net)

    def _apply_scale(self):
        # Desk scale shrinks sizes/epochs/trials (and retunes the learning
        # rate for the shorter schedule) but never changes protocol
        # structure; paper scale uses the published values.
        if self.scale == "desk":
            defaults = dict(n_train=10_000, epochs=100, trials=3,
                            learning_rate=0.002, net_sizes=DESK_NET_SIZES,
                            single_net=(1050, 650))
        else:
            defaults = dict(n_train=30_000, epochs=400, trials=10,
                            learning_rate=0.008, net_sizes=PAPER_NET_SIZES,
                            single_net=(3050, 1650))
        for key, value in defaults.items():
            if getattr(self, key) is None:
                setattr(self, key, value)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["net_sizes"] = [list(s) for s in self.net_sizes]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: not valid JSON: {exc}")
        return cls.from_dict(data)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def derive_seed(master: int, *labels) -> int:
    """Stable 63-bit seed from the master seed and condition labels."""
    text = "|".join([str(master), *map(str, labels)])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def derive_rng(master: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))
