import json

import numpy as np
import pytest

from qforge import neuralnet as nn
from qforge.ensembles import sample_hs, sample_mems_rotated
from qforge.qcore import DensityMatrix, TauVector, concurrence, fidelity, purity, tau_encode
from qforge.tomography import ideal_probabilities, sample_counts
from qforge.workbench import (
    RunConfig,
    dataset_load,
    dataset_save,
    derive_seed,
    emit_report,
    reaggregate,
    run_experiment,
    summarize,
)
from qforge.workbench.config import ConfigError, DESK_NET_SIZES, PAPER_NET_SIZES
from qforge.workbench.datasets import IntegrityError
from qforge.workbench.experiments import z_beta_for_mean_purity
from qforge.workbench.pipeline import (
    concurrence_batch,
    decode_tau_batch,
    fidelity_batch,
    nisq_test_set,
    ppt_entangled_batch,
    predict_averaged,
    psd_sqrt_batch,
    purity_batch,
)
from qforge.workbench.report import RunReport

TINY = dict(
    seed=77, n_train=200, epochs=3, trials=2, n_nisq_test=16, n_property_test=24,
    net_sizes=[(16, 8)], single_net=(16, 8), ns_fractions=[0.0, 0.05],
    shots_list=[32], qubit_list=[2], het_k_values=[4, 6], k_sweep=[4],
    eta_grid=[0.002], purity_means=[0.68], appendix_sections=["C"],
)


def tiny_config(experiment, **over):
    return RunConfig.from_dict({**TINY, "experiment": experiment, **over})


class TestRunConfig:
    def test_scale_presets(self):
        desk = RunConfig(experiment="distributions")
        assert desk.n_train == 10_000 and desk.epochs == 100 and desk.trials == 3
        assert desk.net_sizes == DESK_NET_SIZES and desk.single_net == (1050, 650)
        paper = RunConfig(experiment="distributions", scale="paper")
        assert paper.n_train == 30_000 and paper.epochs == 400 and paper.trials == 10
        assert paper.net_sizes == PAPER_NET_SIZES and paper.learning_rate == 0.008

    def test_explicit_values_override_preset(self):
        cfg = RunConfig(experiment="shots", n_train=123, epochs=7)
        assert cfg.n_train == 123 and cfg.epochs == 7 and cfg.trials == 3

    def test_scales_differ_only_in_size_knobs(self):
        # scaling down shrinks sizes, never the protocol structure
        desk = RunConfig(experiment="distributions").to_dict()
        paper = RunConfig(experiment="distributions", scale="paper").to_dict()
        changed = {k for k in desk if desk[k] != paper[k]}
        assert changed == {"scale", "n_train", "epochs", "trials",
                           "learning_rate", "net_sizes", "single_net"}

    def test_json_roundtrip(self, tmp_path):
        cfg = tiny_config("spurious")
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        again = RunConfig.from_file(path)
        assert again.to_dict() == cfg.to_dict()
        assert again.content_hash() == cfg.content_hash()

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"experiment": "shots", "bogus": 1})

    def test_counts_source_needs_path(self):
        with pytest.raises(ConfigError):
            RunConfig(experiment="distributions", test_source="counts-file")

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            RunConfig(experiment="nope")


class TestSeedDerivation:
    def test_stable(self):
        assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)

    def test_label_sensitivity(self):
        seeds = {derive_seed(1), derive_seed(2), derive_seed(1, "x"), derive_seed(1, "y"),
                 derive_seed(1, "x", 0), derive_seed(1, "x", 1)}
        assert len(seeds) == 6

    def test_adding_conditions_never_perturbs_others(self):
        # seed for condition "a" does not depend on what other labels exist
        before = derive_seed(42, "cond-a", "trial", 0)
        _ = derive_seed(42, "cond-b", "trial", 0)
        assert derive_seed(42, "cond-a", "trial", 0) == before


class TestDatasets:
    def test_roundtrip_all_types(self, tmp_path, rng, bell):
        rec = sample_counts(ideal_probabilities(bell, 2), 64, rng)
        items = [sample_hs(4, rng), tau_encode(bell), rec,
                 ideal_probabilities(bell, 2)]
        path = tmp_path / "data.qfrg"
        dataset_save(path, items)
        loaded = dataset_load(path)
        assert len(loaded) == 4
        np.testing.assert_array_equal(loaded[0].matrix, items[0].matrix)
        np.testing.assert_array_equal(loaded[1].values, items[1].values)
        assert loaded[2].shots == 64
        for s in rec.frequencies:
            np.testing.assert_array_equal(loaded[2].frequencies[s], rec.frequencies[s])
        np.testing.assert_array_equal(loaded[2].ground_truth.matrix, bell.matrix)
        assert loaded[3].shots == 0

    def test_bit_identical_roundtrip(self, tmp_path, rng):
        items = [sample_hs(4, rng) for _ in range(10)]
        p1, p2 = tmp_path / "a.qfrg", tmp_path / "b.qfrg"
        dataset_save(p1, items)
        dataset_save(p2, dataset_load(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file(self, tmp_path, rng):
        path = tmp_path / "data.qfrg"
        dataset_save(path, [sample_hs(4, rng)])
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(IntegrityError):
            dataset_load(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "data.qfrg"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(IntegrityError):
            dataset_load(path)

    def test_unknown_version(self, tmp_path, rng):
        path = tmp_path / "data.qfrg"
        dataset_save(path, [sample_hs(4, rng)])
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(IntegrityError):
            dataset_load(path)

    def test_trailing_bytes(self, tmp_path, rng):
        path = tmp_path / "data.qfrg"
        dataset_save(path, [sample_hs(4, rng)])
        path.write_bytes(path.read_bytes() + b"!")
        with pytest.raises(IntegrityError):
            dataset_load(path)

    def test_large_file_invariant_sweep(self, tmp_path):
        # 30,000 states survive the roundtrip with all invariants intact
        # (DensityMatrix re-validates on load)
        rng = np.random.default_rng(8)
        g = (rng.standard_normal((30_000, 4, 4)) + 1j * rng.standard_normal((30_000, 4, 4)))
        w = g @ g.conj().transpose(0, 2, 1)
        w /= np.einsum("nii->n", w).real[:, None, None]
        states = [DensityMatrix(m) for m in w]
        path = tmp_path / "big.qfrg"
        dataset_save(path, states)
        loaded = dataset_load(path)
        assert len(loaded) == 30_000
        np.testing.assert_array_equal(loaded[12345].matrix, states[12345].matrix)


class TestReport:
    def test_summarize_quartile_convention(self):
        stats = summarize([1.0, 2.0, 3.0, 4.0])
        assert stats["q1"] == pytest.approx(1.75)
        assert stats["median"] == pytest.approx(2.5)
        assert stats["q3"] == pytest.approx(3.25)
        assert stats["std"] == pytest.approx(np.sqrt(1.25))  # population std
        assert stats["n"] == 4

    def test_emit_and_reaggregate(self, tmp_path):
        report = RunReport(
            experiment="demo",
            config={"seed": 5},
            rows=[{"condition": "a", "fidelity_mean": 0.5}],
            per_state={"a": [0.4, 0.5, 0.6], "b": [0.9, 1.0]},
        )
        written = emit_report(report, tmp_path)
        assert written["summary"].exists() and written["per_state"].exists()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 5
        rows = {r["condition"]: r for r in reaggregate(tmp_path)}
        assert rows["a"]["mean"] == pytest.approx(0.5)
        assert rows["a"]["n"] == 3
        assert rows["b"]["mean"] == pytest.approx(0.95)

    def test_summary_matches_per_state_reaggregation(self, tmp_path):
        cfg = tiny_config("shots")
        report = run_experiment(cfg)
        emit_report(report, tmp_path)
        re_rows = {r["condition"]: r for r in reaggregate(tmp_path)}
        for row in report.rows:
            label = f"shots={row['shots']}|{row['training']}"
            assert row["fidelity_mean"] == pytest.approx(re_rows[label]["mean"], abs=1e-12)
            assert row["fidelity_std"] == pytest.approx(re_rows[label]["std"], abs=1e-12)


class TestBatchedMetrics:
    def test_match_per_state_implementations(self, rng):
        mats = np.stack([sample_hs(4, rng).matrix for _ in range(40)])
        states = [DensityMatrix(m) for m in mats]
        np.testing.assert_allclose(purity_batch(mats), [purity(s) for s in states], atol=1e-12)
        np.testing.assert_allclose(
            concurrence_batch(mats), [concurrence(s) for s in states], atol=1e-9
        )
        from qforge.qcore import is_entangled_ppt

        np.testing.assert_array_equal(
            ppt_entangled_batch(mats), [is_entangled_ppt(s) for s in states]
        )

    def test_fidelity_batch_matches(self, rng):
        gts = np.stack([sample_hs(4, rng).matrix for _ in range(20)])
        preds = np.stack([sample_hs(4, rng).matrix for _ in range(20)])
        batch = fidelity_batch(psd_sqrt_batch(gts), preds)
        singles = [
            fidelity(DensityMatrix(g), DensityMatrix(p)) for g, p in zip(gts, preds)
        ]
        np.testing.assert_allclose(batch, singles, atol=1e-7)

    def test_decode_tau_batch_matches(self, rng):
        from qforge.qcore import tau_decode

        taus = rng.uniform(-1, 1, (30, 16))
        batch = decode_tau_batch(taus, 2)
        for row, mat in zip(taus, batch):
            np.testing.assert_allclose(mat, tau_decode(TauVector(row)).matrix, atol=1e-12)

    def test_mems_batch_concurrence(self, rng):
        mats = np.stack([sample_mems_rotated(rng).matrix for _ in range(30)])
        np.testing.assert_allclose(
            concurrence_batch(mats),
            [concurrence(DensityMatrix(m)) for m in mats],
            atol=1e-9,
        )


class TestPipeline:
    def test_nisq_test_set_deterministic(self):
        cfg = tiny_config("distributions")
        a = nisq_test_set(cfg)
        b = nisq_test_set(cfg)
        for (gta, reca), (gtb, recb) in zip(a, b):
            np.testing.assert_array_equal(gta.matrix, gtb.matrix)
            for s in reca.frequencies:
                np.testing.assert_array_equal(reca.frequencies[s], recb.frequencies[s])

    def test_counts_file_source(self, tmp_path, rng, bell):
        from qforge.tomography import write_counts_file

        recs = [sample_counts(ideal_probabilities(bell, 2), 2048, rng) for _ in range(4)]
        path = tmp_path / "hw.jsonl"
        write_counts_file(path, recs)
        cfg = tiny_config("distributions", test_source="counts-file",
                          counts_path=str(path), test_shots=64)
        test = nisq_test_set(cfg)
        assert len(test) == 4
        for gt, rec in test:
            assert fidelity(gt, bell) > 0.9  # MLE of Bell counts stays near Bell
            assert rec.shots == 64

    def test_predict_averaged_is_physical(self, rng):
        nets = [nn.Network(nn.NetConfig(2, 8, 4), np.random.default_rng(s)) for s in (0, 1)]
        grids = rng.random((7, 6, 6))
        preds = predict_averaged(nets, grids)
        assert np.allclose(np.einsum("nii->n", preds).real, 1.0, atol=1e-10)
        assert np.linalg.eigvalsh(preds).min() > -1e-10

    def test_worker_pool_matches_serial(self):
        cfg_serial = tiny_config("shots")
        cfg_pool = tiny_config("shots", workers=2)
        a = run_experiment(cfg_serial)
        b = run_experiment(cfg_pool)
        for ra, rb in zip(a.rows, rb := b.rows):
            assert ra == dict(rb)


class TestZBetaSolver:
    def test_matches_closed_form(self):
        # the defining equation is linear in beta: beta = (1-p)/(pD - 1)
        for target in (0.5, 0.68, 0.9):
            beta = z_beta_for_mean_purity(target, 4)
            assert beta == pytest.approx((1 - target) / (target * 4 - 1), abs=1e-9)

    def test_reference_value(self):
        assert z_beta_for_mean_purity(0.68, 4) == pytest.approx(0.186, abs=5e-4)

    def test_domain(self):
        with pytest.raises(ConfigError):
            z_beta_for_mean_purity(0.25, 4)


class TestExperimentStructure:
    def test_spurious_rows_and_scatter(self):
        report = run_experiment(tiny_config("spurious"))
        assert [r["n_s"] for r in report.rows] == [0, 10]
        for row in report.rows:
            assert 0 <= row["separable_accuracy"] <= 1
            assert 0 <= row["mems_accuracy"] <= 1
        header, scatter = report.extra_tables["scatter"]
        assert header == ["condition", "purity", "concurrence", "fidelity"]
        assert len(scatter) == 2 * TINY["n_property_test"]

    def test_distributions_rows(self):
        report = run_experiment(tiny_config("distributions"))
        assert len(report.rows) == 6  # six distributions x one size
        dists = {r["distribution"] for r in report.rows}
        assert dists == {"engineered", "HSHaar", "MA", "Z", "HS", "Bures"}
        assert all(r["parameters"] == nn.param_count(nn.NetConfig(2, 16, 8)) for r in report.rows)
        header, rows = report.extra_tables["training_sets"]
        assert len(rows) == 6
        eng = next(r for r in rows if r[0] == "engineered")
        assert 0.68 <= eng[2] and eng[3] <= 0.96  # purity min/max inside band

    def test_shots_rows(self):
        report = run_experiment(tiny_config("shots"))
        assert len(report.rows) == 2
        assert {r["training"] for r in report.rows} == {"ideal", "matched"}

    def test_heterogeneity_rows(self):
        report = run_experiment(tiny_config("heterogeneity"))
        per_k = [r for r in report.rows if r["bin"] == "all"]
        assert [r["train_k"] for r in per_k] == [4, 6]
        binned = [r for r in report.rows if r["bin"] != "all"]
        assert len(binned) == 2 * 10
        assert sum(r["count"] for r in binned) == 2 * TINY["n_property_test"]

    def test_appendix_rows(self):
        report = run_experiment(tiny_config("appendix"))
        assert {(r["section"], r["variant"]) for r in report.rows} == {
            ("C", "raw"), ("C", "engineered")
        }

    def test_csv_bytes_reproducible(self, tmp_path):
        cfg = tiny_config("shots")
        d1, d2 = tmp_path / "r1", tmp_path / "r2"
        emit_report(run_experiment(cfg), d1)
        emit_report(run_experiment(cfg), d2)
        assert (d1 / "shots.csv").read_bytes() == (d2 / "shots.csv").read_bytes()
        assert (d1 / "shots_per_state.csv").read_bytes() == (d2 / "shots_per_state.csv").read_bytes()


class TestCli:
    def run_cli(self, *argv):
        from qforge.workbench.cli import main

        return main([str(a) for a in argv])

    def test_full_pipeline(self, tmp_path):
        work = tmp_path
        (work / "sample.json").write_text(json.dumps(
            {"ensemble": {"kind": "HS", "dim": 4}, "n": 40, "seed": 3}))
        assert self.run_cli("sample", "--config", work / "sample.json", "--out", work) == 0

        (work / "measure.json").write_text(json.dumps(
            {"dataset": str(work / "samples.qfrg"), "shots": 128, "seed": 4}))
        assert self.run_cli("measure", "--config", work / "measure.json", "--out", work) == 0

        (work / "train.json").write_text(json.dumps({
            "records": str(work / "records.qfrg"),
            "net": {"qubits": 2, "dense1": 8, "dense2": 4},
            "train": {"learning_rate": 0.002, "epochs": 2, "batch_size": 16, "trials": 1},
            "seed": 5}))
        assert self.run_cli("train", "--config", work / "train.json", "--out", work) == 0
        assert (work / "model.qfnn").exists()

        (work / "rec.json").write_text(json.dumps({
            "checkpoint": str(work / "model.qfnn"),
            "records": str(work / "records.qfrg")}))
        assert self.run_cli("reconstruct", "--config", work / "rec.json", "--out", work) == 0
        assert (work / "reconstruction.csv").exists()
        assert (work / "predicted.qfrg").exists()

    def test_engineer_command(self, tmp_path):
        (tmp_path / "eng.json").write_text(json.dumps({
            "bandpass": {"p_min": 0.68, "p_max": 0.96, "c_min": 0.0, "c_max": 0.86},
            "k": 6, "n": 25, "seed": 9}))
        assert self.run_cli("engineer", "--config", tmp_path / "eng.json", "--out", tmp_path) == 0
        states = dataset_load(tmp_path / "engineered.qfrg")
        assert len(states) == 25
        assert all(0.68 <= purity(s) <= 0.96 for s in states)

    def test_experiment_and_report_commands(self, tmp_path):
        (tmp_path / "exp.json").write_text(json.dumps(
            {**TINY, "shots_list": [16], "n_nisq_test": 8, "n_train": 60, "epochs": 2}))
        assert self.run_cli("experiment", "shots", "--config", tmp_path / "exp.json",
                            "--out", tmp_path / "runs") == 0
        run_dir = tmp_path / "runs" / "shots"
        assert (run_dir / "manifest.json").exists()
        assert self.run_cli("report", run_dir) == 0
        assert (run_dir / "reaggregated.csv").exists()

    def test_seed_is_mandatory(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"ensemble": {"kind": "HS", "dim": 4}, "n": 5}))
        with pytest.raises(SystemExit):
            self.run_cli("sample", "--config", tmp_path / "s.json", "--out", tmp_path)

    def test_missing_file_is_error(self, tmp_path):
        assert self.run_cli("report", tmp_path / "nonexistent") == 1
