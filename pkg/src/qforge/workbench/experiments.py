"""The five experiment protocols, each a pure function of a RunConfig.

Shared structure: build seeded training and test sets, train `trials` nets
per condition, evaluate the trial-averaged predictions on the test set, and
collect per-condition rows plus the full per-state fidelity lists.
"""

from __future__ import annotations

import time

import numpy as np

from .. import neuralnet as nn
from ..engineer import alpha_for_min_purity, filtered_ma_states
from ..ensembles import (
    EnsembleSpec,
    sample_ensemble,
)
from ..qcore import DensityMatrix
from ..tomography import sample_counts
from .config import (
    HETEROGENEITY_K,
    HETEROGENEITY_TEST,
    ConfigError,
    RunConfig,
    derive_rng,
)
from .pipeline import (
    bandpass_spec,
    concurrence_batch,
    fidelity_batch,
    grids_of,
    nisq_test_set,
    ppt_entangled_batch,
    predict_averaged,
    psd_sqrt_batch,
    purity_batch,
    records_to_dataset,
    states_to_records,
    train_trials,
)
from .report import RunReport, summarize


def z_beta_for_mean_purity(target: float, dim: int = 4, tol: float = 1e-12) -> float:
    """Solve (1+beta)/(1+D beta) = target by bisection.

    The expectation decreases monotonically from 1 (beta -> 0) to 1/D
    (beta -> inf).
    """
    if not 1.0 / dim < target < 1.0:
        raise ConfigError(f"target mean purity must lie in (1/{dim}, 1), got {target}")
    lo, hi = 1e-12, 1.0
    while (1.0 + hi) / (1.0 + dim * hi) > target:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (1.0 + mid) / (1.0 + dim * mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _ma_alpha(cfg: RunConfig) -> float:
    return cfg.ma_alpha if cfg.ma_alpha is not None else alpha_for_min_purity(cfg.band_p_min, 4)


def training_states(cfg: RunConfig, dist: str, n: int, rng) -> list[DensityMatrix]:
    """Sample one of the comparison training distributions."""
    band = bandpass_spec(cfg)
    if dist == "engineered":
        return filtered_ma_states(_ma_alpha(cfg), band, cfg.sample_k, n, rng)
    if dist == "MA":
        spec = EnsembleSpec("MA", 4, alpha=_ma_alpha(cfg), k=cfg.sample_k)
    elif dist == "Z":
        spec = EnsembleSpec("Z", 4, beta=z_beta_for_mean_purity(cfg.band_p_min, 4))
    elif dist in ("HS", "Bures", "HSHaar"):
        spec = EnsembleSpec(dist, 4)
    else:
        raise ConfigError(f"unknown training distribution {dist!r}")
    return sample_ensemble(spec, n, rng)


def _stack(states) -> np.ndarray:
    return np.stack([s.matrix for s in states])


def _condition(
    cfg: RunConfig,
    label: str,
    states,
    net_size: tuple[int, int],
    test_grids: np.ndarray,
    gt_sqrts: np.ndarray,
    shots: int = 0,
    qubits: int = 2,
    learning_rate=None,
):
    """Train one condition and evaluate it; returns (fids, predictions)."""
    data_rng = derive_rng(cfg.seed, label, "measure")
    records = states_to_records(states, qubits, shots, data_rng)
    dataset = records_to_dataset(records, states)
    net_cfg = nn.NetConfig(qubits=qubits, dense1=net_size[0], dense2=net_size[1])
    nets = train_trials(dataset, net_cfg, cfg, label, learning_rate=learning_rate)
    preds = predict_averaged(nets, test_grids)
    fids = fidelity_batch(gt_sqrts, preds)
    return fids, preds


# -- spurious correlations (counterexample injection) ----------------------


def exp_spurious(cfg: RunConfig) -> RunReport:
    """Rotated-MEMS training with a growing separable fraction; evaluates
    PPT classification and fidelity on separable / MEMS / mixture test sets."""
    t0 = time.time()
    report = RunReport("spurious", cfg.to_dict())
    n_test = cfg.n_property_test

    sep_test = sample_ensemble(EnsembleSpec("SeparableProduct", 4), n_test,
                               derive_rng(cfg.seed, "test-separable"))
    mems_test = sample_ensemble(EnsembleSpec("MEMS", 4), n_test,
                                derive_rng(cfg.seed, "test-mems"))
    ma_test = sample_ensemble(EnsembleSpec("MA", 4, alpha=0.1, k=4), n_test,
                              derive_rng(cfg.seed, "test-ma"))

    sets = {}
    for name, states in (("separable", sep_test), ("mems", mems_test), ("ma", ma_test)):
        mats = _stack(states)
        records = states_to_records(states, 2, 0, None)
        sets[name] = {
            "mats": mats,
            "grids": grids_of(records),
            "sqrts": psd_sqrt_batch(mats),
            "entangled": ppt_entangled_batch(mats),
        }

    scatter_rows = []
    endpoints = (cfg.ns_fractions[0], cfg.ns_fractions[-1])
    for frac in cfg.ns_fractions:
        n_s = int(round(frac * cfg.n_train))
        label = f"ns={n_s}"
        rng = derive_rng(cfg.seed, "spurious", label, "data")
        train = sample_ensemble(EnsembleSpec("MEMS", 4), cfg.n_train - n_s, rng)
        if n_s:
            train += sample_ensemble(EnsembleSpec("SeparableProduct", 4), n_s, rng)

        data_rng = derive_rng(cfg.seed, "spurious", label, "measure")
        dataset = records_to_dataset(states_to_records(train, 2, 0, data_rng), train)
        net_cfg = nn.NetConfig(qubits=2, dense1=cfg.single_net[0], dense2=cfg.single_net[1])
        nets = train_trials(dataset, net_cfg, cfg, f"spurious|{label}")

        row = {"n_s": n_s, "fraction": frac}
        for name in ("separable", "mems", "ma"):
            ts = sets[name]
            preds = predict_averaged(nets, ts["grids"])
            fids = fidelity_batch(ts["sqrts"], preds)
            pred_ent = ppt_entangled_batch(preds)
            accuracy = float(np.mean(pred_ent == ts["entangled"]))
            stats = summarize(fids)
            row[f"{name}_accuracy"] = accuracy
            for key in ("mean", "std", "q1", "median", "q3"):
                row[f"{name}_fidelity_{key}"] = stats[key]
            report.per_state[f"{name}|{label}"] = fids.tolist()
            if name == "ma" and frac in endpoints:
                purities = purity_batch(ts["mats"])
                concs = concurrence_batch(ts["mats"])
                scatter_rows += [
                    [label, float(p), float(c), float(f)]
                    for p, c, f in zip(purities, concs, fids)
                ]
        report.rows.append(row)

    report.extra_tables["scatter"] = (
        ["condition", "purity", "concurrence", "fidelity"], scatter_rows,
    )
    report.wall_time = time.time() - t0
    return report


# -- training-distribution comparison --------------------------------------

DISTRIBUTIONS = ("engineered", "HSHaar", "MA", "Z", "HS", "Bures")


def exp_distributions(cfg: RunConfig) -> RunReport:
    """One net per (distribution x model size), ideal training records,
    evaluated on the emulated-NISQ test set."""
    t0 = time.time()
    report = RunReport("distributions", cfg.to_dict())

    test = nisq_test_set(cfg)
    gt_mats = _stack([gt for gt, _ in test])
    gt_sqrts = psd_sqrt_batch(gt_mats)
    test_grids = grids_of([rec for _, rec in test])

    summary_rows = []
    for dist in DISTRIBUTIONS:
        states = training_states(cfg, dist, cfg.n_train,
                                 derive_rng(cfg.seed, "dist", dist, "data"))
        mats = _stack(states)
        p = purity_batch(mats)
        c = concurrence_batch(mats)
        summary_rows.append([dist, float(p.mean()), float(p.min()), float(p.max()),
                             float(c.mean()), float(c.min()), float(c.max())])

        for size in cfg.net_sizes:
            label = f"{dist}|{size[0]}x{size[1]}"
            fids, _ = _condition(cfg, label, states, size, test_grids, gt_sqrts)
            stats = summarize(fids)
            report.rows.append({
                "distribution": dist,
                "dense1": size[0],
                "dense2": size[1],
                "parameters": nn.param_count(
                    nn.NetConfig(qubits=2, dense1=size[0], dense2=size[1])
                ),
                **{f"fidelity_{k}": v for k, v in stats.items()},
            })
            report.per_state[label] = fids.tolist()

    report.extra_tables["training_sets"] = (
        ["distribution", "purity_mean", "purity_min", "purity_max",
         "concurrence_mean", "concurrence_min", "concurrence_max"],
        summary_rows,
    )
    report.wall_time = time.time() - t0
    return report


# -- shot-noise matching ----------------------------------------------------


def exp_shots(cfg: RunConfig) -> RunReport:
    """Ideal-trained vs matched-shot-trained nets on test records resampled
    at each shot level.  The ideal-trained nets do not depend on the shot
    level and are trained once."""
    t0 = time.time()
    report = RunReport("shots", cfg.to_dict())

    test = nisq_test_set(cfg, shots=0)
    gts = [gt for gt, _ in test]
    gt_sqrts = psd_sqrt_batch(_stack(gts))
    ideal_records = [rec for _, rec in test]

    train = training_states(cfg, "engineered", cfg.n_train,
                            derive_rng(cfg.seed, "shots", "train-data"))

    ideal_dataset = records_to_dataset(states_to_records(train, 2, 0, None), train)
    net_cfg = nn.NetConfig(qubits=2, dense1=cfg.single_net[0], dense2=cfg.single_net[1])
    ideal_nets = train_trials(ideal_dataset, net_cfg, cfg, "shots|ideal")

    for shots in cfg.shots_list:
        rng = derive_rng(cfg.seed, "shots", "test-resim", shots)
        test_grids = grids_of([sample_counts(r, shots, rng) for r in ideal_records])

        fids_ideal = fidelity_batch(gt_sqrts, predict_averaged(ideal_nets, test_grids))
        fids_matched, _ = _condition(cfg, f"shots={shots}|matched", train,
                                     cfg.single_net, test_grids, gt_sqrts, shots=shots)
        for variant, fids in (("ideal", fids_ideal), ("matched", fids_matched)):
            stats = summarize(fids)
            report.rows.append({
                "shots": shots, "training": variant,
                **{f"fidelity_{k}": v for k, v in stats.items()},
            })
            report.per_state[f"shots={shots}|{variant}"] = fids.tolist()

    report.wall_time = time.time() - t0
    return report


# -- purity heterogeneity (training-K sweep) --------------------------------

PURITY_BIN_EDGES = np.linspace(0.3, 1.0, 11)


def exp_heterogeneity(cfg: RunConfig) -> RunReport:
    """Mixture-ensemble test sets reconstructed by nets trained at larger
    mixture sizes; fidelities binned by ground-truth purity."""
    t0 = time.time()
    report = RunReport("heterogeneity", cfg.to_dict())

    for d in cfg.qubit_list:
        if d not in HETEROGENEITY_TEST:
            raise ConfigError(f"heterogeneity experiment supports d in 2..4, got {d}")
        alpha, k_test = HETEROGENEITY_TEST[d]
        k_values = cfg.het_k_values if cfg.het_k_values is not None else HETEROGENEITY_K[d]

        test = sample_ensemble(EnsembleSpec("MA", 2**d, alpha=alpha, k=k_test),
                               cfg.n_property_test, derive_rng(cfg.seed, "het", d, "test"))
        mats = _stack(test)
        purities = purity_batch(mats)
        gt_sqrts = psd_sqrt_batch(mats)
        test_grids = grids_of(states_to_records(test, d, 0, None))
        bin_idx = np.clip(np.digitize(purities, PURITY_BIN_EDGES) - 1, 0, 9)

        for k in k_values:
            label = f"d={d}|K={k}"
            states = sample_ensemble(EnsembleSpec("MA", 2**d, alpha=alpha, k=k),
                                     cfg.n_train, derive_rng(cfg.seed, "het", d, k, "data"))
            fids, _ = _condition(cfg, label, states, cfg.single_net, test_grids,
                                 gt_sqrts, qubits=d)
            overall = summarize(fids)
            report.per_state[label] = fids.tolist()
            for b in range(10):
                members = bin_idx == b
                row = {
                    "qubits": d, "train_k": k, "bin": b,
                    "bin_lo": float(PURITY_BIN_EDGES[b]),
                    "bin_hi": float(PURITY_BIN_EDGES[b + 1]),
                    "count": int(members.sum()),
                }
                if members.any():
                    row["purity_mean"] = float(purities[members].mean())
                    row["fidelity_mean"] = float(fids[members].mean())
                    row["fidelity_std"] = float(fids[members].std())
                else:
                    row["purity_mean"] = row["fidelity_mean"] = row["fidelity_std"] = float("nan")
                report.rows.append(row)
            report.rows.append({
                "qubits": d, "train_k": k, "bin": "all",
                "bin_lo": 0.0, "bin_hi": 1.0, "count": len(fids),
                "purity_mean": float(purities.mean()),
                "fidelity_mean": overall["mean"],
                "fidelity_std": overall["std"],
            })

    report.wall_time = time.time() - t0
    return report


# -- appendix sweeps ---------------------------------------------------------


def exp_appendix_sweeps(cfg: RunConfig) -> RunReport:
    """(C) mixture-size sweep raw vs engineered, (D) learning-rate sweep,
    (F) pre-filter mean-purity sweep."""
    t0 = time.time()
    report = RunReport("appendix", cfg.to_dict())

    test = nisq_test_set(cfg)
    gt_sqrts = psd_sqrt_batch(_stack([gt for gt, _ in test]))
    test_grids = grids_of([rec for _, rec in test])
    band = bandpass_spec(cfg)

    def run(label, states, lr=None):
        fids, _ = _condition(cfg, label, states, cfg.single_net, test_grids,
                             gt_sqrts, learning_rate=lr)
        report.per_state[label] = fids.tolist()
        return summarize(fids)

    if "C" in cfg.appendix_sections:
        alpha = _ma_alpha(cfg)
        for k in cfg.k_sweep:
            for variant in ("raw", "engineered"):
                label = f"C|k={k}|{variant}"
                rng = derive_rng(cfg.seed, "appendix", label, "data")
                if variant == "raw":
                    states = sample_ensemble(
                        EnsembleSpec("MA", 4, alpha=alpha, k=k), cfg.n_train, rng)
                else:
                    states = filtered_ma_states(alpha, band, k, cfg.n_train, rng)
                stats = run(label, states)
                report.rows.append({"section": "C", "k": k, "variant": variant,
                                    "eta": cfg.learning_rate, "target_mean": "",
                                    **{f"fidelity_{s}": v for s, v in stats.items()}})

    if "D" in cfg.appendix_sections:
        for eta in cfg.eta_grid:
            for dist in ("HSHaar", "Z", "MA0.8"):
                label = f"D|eta={eta}|{dist}"
                rng = derive_rng(cfg.seed, "appendix", label, "data")
                if dist == "MA0.8":
                    states = sample_ensemble(EnsembleSpec("MA", 4, alpha=0.8, k=4),
                                             cfg.n_train, rng)
                else:
                    states = training_states(cfg, dist, cfg.n_train, rng)
                stats = run(label, states, lr=eta)
                report.rows.append({"section": "D", "k": "", "variant": dist,
                                    "eta": eta, "target_mean": "",
                                    **{f"fidelity_{s}": v for s, v in stats.items()}})

    if "F" in cfg.appendix_sections:
        for target in cfg.purity_means:
            alpha = alpha_for_min_purity(target, 4)
            for variant in ("raw", "engineered"):
                label = f"F|mean={target}|{variant}"
                rng = derive_rng(cfg.seed, "appendix", label, "data")
                if variant == "raw":
                    states = sample_ensemble(
                        EnsembleSpec("MA", 4, alpha=alpha, k=cfg.sample_k),
                        cfg.n_train, rng)
                else:
                    states = filtered_ma_states(alpha, band, cfg.sample_k,
                                                cfg.n_train, rng)
                stats = run(label, states)
                report.rows.append({"section": "F", "k": cfg.sample_k, "variant": variant,
                                    "eta": cfg.learning_rate, "target_mean": target,
                                    **{f"fidelity_{s}": v for s, v in stats.items()}})

    report.wall_time = time.time() - t0
    return report


EXPERIMENTS = {
    "spurious": exp_spurious,
    "distributions": exp_distributions,
    "shots": exp_shots,
    "heterogeneity": exp_heterogeneity,
    "appendix": exp_appendix_sweeps,
}


def run_experiment(cfg: RunConfig) -> RunReport:
    return EXPERIMENTS[cfg.experiment](cfg)
