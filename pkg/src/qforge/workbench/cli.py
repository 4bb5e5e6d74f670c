"""qforge command line: sampling, engineering, measurement, training,
reconstruction, experiment orchestration, and report re-aggregation.

Utility subcommands read their inputs from a single JSON config file (keys
documented per subcommand below); `experiment` takes RunConfig overrides.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import neuralnet as nn
from ..engineer import BandpassSpec, engineer_training_set
from ..ensembles import EnsembleSpec, sample_ensemble
from ..qcore import DensityMatrix, fidelity, purity
from ..tomography import read_counts_file
from .config import RunConfig
from .datasets import dataset_load, dataset_save
from .experiments import run_experiment
from .pipeline import records_to_dataset, states_to_records
from .report import emit_report, reaggregate


def _load_config(path) -> dict:
    if path is None:
        raise SystemExit("this subcommand requires --config <file.json>")
    with open(path) as fh:
        return json.load(fh)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeded(cfg: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in cfg:
        return int(cfg["seed"])
    raise SystemExit("a seed is mandatory: pass --seed or put 'seed' in the config")


def cmd_sample(args):
    """config keys: ensemble {kind, dim, alpha?, k?, beta?}, n, seed."""
    cfg = _load_config(args.config)
    spec = EnsembleSpec(**cfg["ensemble"])
    rng = np.random.default_rng(_seeded(cfg, args))
    states = sample_ensemble(spec, int(cfg["n"]), rng)
    out = _out_dir(args) / "samples.qfrg"
    dataset_save(out, states)
    purities = [purity(s) for s in states]
    print(f"wrote {len(states)} {spec.kind} states to {out} "
          f"(mean purity {np.mean(purities):.4f})")


def cmd_engineer(args):
    """config keys: bandpass {p_min, p_max, c_min, c_max}, k, n, seed."""
    cfg = _load_config(args.config)
    band = BandpassSpec(**cfg["bandpass"])
    rng = np.random.default_rng(_seeded(cfg, args))
    states = engineer_training_set(band, int(cfg.get("k", 6)), int(cfg["n"]), rng)
    out = _out_dir(args) / "engineered.qfrg"
    dataset_save(out, states)
    print(f"wrote {len(states)} engineered states to {out}")


def cmd_measure(args):
    """config keys: dataset (states .qfrg), shots (0 = ideal), qubits, seed."""
    cfg = _load_config(args.config)
    states = [s for s in dataset_load(cfg["dataset"]) if isinstance(s, DensityMatrix)]
    if not states:
        raise SystemExit(f"no density matrices in {cfg['dataset']}")
    qubits = int(cfg.get("qubits", states[0].qubits))
    shots = int(cfg.get("shots", 0))
    rng = np.random.default_rng(_seeded(cfg, args)) if shots > 0 else None
    records = states_to_records(states, qubits, shots, rng)
    out = _out_dir(args) / "records.qfrg"
    dataset_save(out, records)
    print(f"wrote {len(records)} records (shots={shots}) to {out}")


def cmd_train(args):
    """config keys: records (.qfrg with ground truths), net {qubits, dense1,
    dense2}, train {learning_rate, epochs, batch_size, optimizer, trials},
    seed."""
    cfg = _load_config(args.config)
    records = dataset_load(cfg["records"])
    pairs = [(r, r.ground_truth) for r in records if getattr(r, "ground_truth", None) is not None]
    if not pairs:
        raise SystemExit("training needs records with ground-truth states")
    dataset = records_to_dataset([r for r, _ in pairs], [s for _, s in pairs])
    net_cfg = nn.NetConfig(**cfg.get("net", {}))
    train_kwargs = dict(cfg.get("train", {}))
    train_kwargs.pop("seed", None)  # the master seed wins
    train_cfg = nn.TrainConfig(**train_kwargs, seed=_seeded(cfg, args))
    rng = np.random.default_rng(train_cfg.seed)
    net = nn.Network(net_cfg, rng, dtype=np.float32)
    net, history = nn.train(net, dataset, train_cfg, rng)
    out = _out_dir(args)
    nn.save_checkpoint(net, out / "model.qfnn")
    with open(out / "loss_history.csv", "w") as fh:
        fh.write("epoch,loss\n")
        fh.writelines(f"{i},{v!r}\n" for i, v in enumerate(history))
    print(f"trained {train_cfg.epochs} epochs (final loss {history[-1]:.6f}); "
          f"checkpoint at {out / 'model.qfnn'}")


def cmd_reconstruct(args):
    """config keys: checkpoint, records (.qfrg) or counts (.jsonl)."""
    cfg = _load_config(args.config)
    net = nn.load_checkpoint(cfg["checkpoint"])
    if "records" in cfg:
        records = [r for r in dataset_load(cfg["records"]) if hasattr(r, "frequencies")]
    elif "counts" in cfg:
        records = read_counts_file(cfg["counts"])
    else:
        raise SystemExit("config needs 'records' or 'counts'")
    out = _out_dir(args)
    predictions = [nn.reconstruct(net, r) for r in records]
    dataset_save(out / "predicted.qfrg", predictions)
    lines = ["index,fidelity,purity"]
    fids = []
    for i, (rec, pred) in enumerate(zip(records, predictions)):
        cell = ""
        if rec.ground_truth is not None:
            f = fidelity(rec.ground_truth, pred)
            fids.append(f)
            cell = repr(f)
        lines.append(f"{i},{cell},{purity(pred)!r}")
    (out / "reconstruction.csv").write_text("\n".join(lines) + "\n")
    msg = f"reconstructed {len(records)} states -> {out / 'predicted.qfrg'}"
    if fids:
        msg += f" (mean fidelity {np.mean(fids):.4f})"
    print(msg)


def cmd_experiment(args):
    overrides = _load_config(args.config) if args.config else {}
    overrides["experiment"] = args.id
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scale:
        overrides["scale"] = args.scale
    if args.out:
        overrides["out_dir"] = args.out
    cfg = RunConfig.from_dict(overrides)
    report = run_experiment(cfg)
    written = emit_report(report, Path(cfg.out_dir) / cfg.experiment)
    print(f"experiment '{cfg.experiment}' done in {report.wall_time:.1f}s; "
          f"{len(report.rows)} rows -> {written['summary']}")


def cmd_report(args):
    rows = reaggregate(args.run_dir)
    out = Path(args.run_dir) / "reaggregated.csv"
    if rows:
        header = list(rows[0].keys())
        lines = [",".join(header)]
        lines += [",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k in header)
                  for r in rows]
        out.write_text("\n".join(lines) + "\n")
    for row in rows:
        print(f"{row['condition']}: mean={row['mean']:.4f} std={row['std']:.4f} n={row['n']}")
    print(f"re-aggregated summary -> {out}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="qforge",
        description="training-set engineering and neural state reconstruction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory")
        p.set_defaults(fn=fn)
        return p

    add("sample", cmd_sample, "draw states from an ensemble")
    add("engineer", cmd_engineer, "build a bandpassed training set")
    add("measure", cmd_measure, "simulate tomography records for a dataset")
    add("train", cmd_train, "train a reconstruction net on records")
    add("reconstruct", cmd_reconstruct, "run a trained net on records or counts")

    p_exp = add("experiment", cmd_experiment, "run a full experiment protocol")
    p_exp.add_argument("id", choices=("spurious", "distributions", "shots",
                                      "heterogeneity", "appendix"))
    p_exp.add_argument("--scale", choices=("desk", "paper"))

    p_rep = sub.add_parser("report", help="re-aggregate a run's per-state fidelities")
    p_rep.add_argument("run_dir")
    p_rep.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
