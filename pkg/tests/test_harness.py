import csv
import json
import math

import numpy as np
import pytest

import oracles
from thinddp.cli import main
from thinddp.datagen import (
    MIXTURE_A,
    MIXTURE_B,
    ScenarioConfig,
    generate_dataset,
)
from thinddp.harness import (
    DataError,
    default_grid,
    fit_csv,
    load_scenario,
    read_grouped_csv,
    run_experiment,
    thinning_model_from_dict,
    thinning_model_to_dict,
)
from thinddp.thinning import (
    BernoulliThinning,
    DependentBernoulliThinning,
    EventuallySingleAtomThinning,
    SymmetricBlockedThinning,
)
from thinddp.mcmc import ModelConfig
from thinddp.summaries import density_estimate, tv_distance


def tiny_scenario(**overrides):
    base = dict(
        name="tiny",
        sizes=(12, 24),
        replications=2,
        seed=77,
        models=("thinned", "complete_pooling", "no_pooling"),
        iterations=150,
        burn_in=100,
        truncation=30,
        grid_points=60,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def write_config(path, **overrides):
    cfg = dict(
        schema_version=1,
        name="tiny",
        sizes=[12, 24],
        replications=2,
        seed=77,
        models=["thinned", "complete_pooling", "no_pooling"],
        iterations=150,
        burn_in=100,
        truncation=30,
        grid_points=60,
    )
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


class TestGenerateDataset:
    def test_assignment_and_sizes(self):
        config = tiny_scenario(sizes=(10, 30))
        rep = generate_dataset(config, 0)
        assert rep.dataset.sizes == (10, 30)
        assert rep.mixtures == (MIXTURE_A, MIXTURE_B)
        assert rep.true_labels[0].max() <= 2
        assert rep.true_labels[1].max() <= 1

    def test_component_frequency(self):
        rng = np.random.default_rng(0)
        y, labels = MIXTURE_A.sample(100_000, rng)
        freq = (labels == 0).mean()
        se = math.sqrt(0.5 * 0.5 / 100_000)
        assert abs(freq - 0.5) < 3 * se

    def test_true_density_value(self):
        # at x=0: 0.25*phi(0|0,.6) dominates; the +-5 components are negligible
        val = MIXTURE_A.pdf(0.0)
        expected = (
            0.25 * oracles.normal_pdf(0.0, 0.0, 0.6)
            + 0.5 * oracles.normal_pdf(0.0, -5.0, 0.6)
            + 0.25 * oracles.normal_pdf(0.0, 5.0, 0.6)
        )
        assert val == pytest.approx(float(expected), abs=1e-12)
        assert val == pytest.approx(0.1287581, abs=1e-6)

    def test_deterministic_per_replication(self):
        config = tiny_scenario()
        a = generate_dataset(config, 1)
        b = generate_dataset(config, 1)
        c = generate_dataset(config, 2)
        assert np.array_equal(a.dataset.groups[0], b.dataset.groups[0])
        assert not np.array_equal(a.dataset.groups[0], c.dataset.groups[0])

    def test_ten_group_default_split(self):
        config = tiny_scenario(sizes=(5,) * 10)
        assert config.generators == ("A",) * 5 + ("B",) * 5

    def test_validation(self):
        with pytest.raises(ValueError):
            tiny_scenario(sizes=(10, 20, 30))  # only 2 or 10 groups
        with pytest.raises(ValueError):
            tiny_scenario(sizes=(0, 10))
        with pytest.raises(ValueError):
            tiny_scenario(replications=0)
        with pytest.raises(ValueError):
            tiny_scenario(models=("bogus",))


class TestRunExperiment:
    def test_rows_and_files(self, tmp_path):
        scenario = tiny_scenario()
        rows, failures = run_experiment(scenario, tmp_path / "out")
        assert not failures
        assert len(rows) == 6  # 2 replications x 3 models
        for row in rows:
            assert -1.0 <= row.avg_ari <= 1.0
            assert all(0.0 <= tv <= 1.0 for tv in row.tv_by_group)
            assert row.avg_hpd_length >= 0.0
            assert row.wall_clock_s > 0.0
        for name in ("metrics.csv", "tv_by_group.csv", "timings.csv",
                     "densities.csv", "manifest.json"):
            assert (tmp_path / "out" / name).exists()
        with open(tmp_path / "out" / "metrics.csv") as fh:
            got = list(csv.reader(fh))
        assert got[0] == ["scenario", "model", "replication", "avg_ari", "avg_tv", "avg_hpd_length"]
        assert len(got) == 7
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["config_sha256"]
        assert manifest["seed"] == 77
        assert manifest["failures"] == []
        # density rows only for replication 0, all groups and models
        with open(tmp_path / "out" / "densities.csv") as fh:
            dens = list(csv.reader(fh))[1:]
        assert len(dens) == 3 * 2 * 60
        assert {r[2] for r in dens} == {"0"}

    def test_byte_identical_reruns(self, tmp_path):
        scenario = tiny_scenario()
        run_experiment(scenario, tmp_path / "a")
        run_experiment(scenario, tmp_path / "b")
        for name in ("metrics.csv", "tv_by_group.csv", "densities.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_worker_pool_matches_serial_bytes(self, tmp_path):
        scenario = tiny_scenario()
        run_experiment(scenario, tmp_path / "serial", workers=1)
        run_experiment(scenario, tmp_path / "pool", workers=2)
        for name in ("metrics.csv", "tv_by_group.csv", "densities.csv"):
            assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "pool" / name).read_bytes()

    def test_failure_recorded_and_run_continues(self, tmp_path, monkeypatch):
        import thinddp.harness as hm

        original = hm._run_replication

        def flaky(scenario, replication):
            if replication == 0:
                raise RuntimeError("synthetic failure")
            return original(scenario, replication)

        monkeypatch.setattr(hm, "_run_replication", flaky)
        rows, failures = run_experiment(tiny_scenario(), tmp_path / "out")
        assert len(failures) == 1 and failures[0]["replication"] == 0
        assert len(rows) == 3  # surviving replication only
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["failures"][0]["replication"] == 0


class TestGroupedCSV:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("group,y\nA,1.5\nB,2.5\nA,-0.5\n")
        data, labels = read_grouped_csv(path)
        assert labels == ["A", "B"]
        np.testing.assert_array_equal(data.groups[0], [1.5, -0.5])
        np.testing.assert_array_equal(data.groups[1], [2.5])

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("group,y\nA,1.0\nB,not-a-number\n")
        with pytest.raises(DataError, match="bad.csv:3"):
            read_grouped_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "head.csv"
        path.write_text("grp,value\nA,1.0\n")
        with pytest.raises(DataError, match="header"):
            read_grouped_csv(path)

    def test_empty_input_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("group,y\n")
        with pytest.raises(DataError, match="no data rows"):
            read_grouped_csv(path)

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "fields.csv"
        path.write_text("group,y\nA,1.0,extra\n")
        with pytest.raises(DataError, match="fields.csv:2"):
            read_grouped_csv(path)


class TestFitCSV:
    def _write_toy(self, path):
        rng = np.random.default_rng(5)
        rows = ["group,y"]
        rows += [f"L,{v:.6f}" for v in rng.normal(0, 1, 12)]
        rows += [f"R,{v:.6f}" for v in rng.normal(5, 1, 14)]
        path.write_text("\n".join(rows) + "\n")

    def test_smoke_artifacts(self, tmp_path):
        data_path = tmp_path / "toy.csv"
        self._write_toy(data_path)
        out = tmp_path / "fit"
        samples = fit_csv(
            data_path, out, config=ModelConfig(truncation=25),
            iterations=200, burn_in=120, seed=9, grid_points=50,
        )
        assert samples.n_draws == 80
        with open(out / "density.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        assert len(rows) == 2 * 50
        for name in ("psm_group_0.csv", "psm_group_1.csv", "psm_global.csv",
                     "partition_by_group.csv", "partition_global.csv",
                     "group_similarity.csv", "group_partition.csv",
                     "pairwise_tv.csv", "manifest.json"):
            assert (out / name).exists()
        with open(out / "psm_group_0.csv") as fh:
            mat_rows = list(csv.reader(fh))
        assert len(mat_rows) == 13 and len(mat_rows[1]) == 13

    def test_truncation_flag_honored(self, tmp_path):
        data_path = tmp_path / "toy.csv"
        self._write_toy(data_path)
        samples = fit_csv(
            data_path, tmp_path / "fit300", config=ModelConfig(truncation=300),
            iterations=60, burn_in=30, seed=1, grid_points=20,
        )
        assert samples.truncation == 300
        manifest = json.loads((tmp_path / "fit300" / "manifest.json").read_text())
        assert manifest["config"]["truncation"] == 300

    def test_single_group_modes_agree(self, tmp_path):
        # with one group, thinning has nothing to share; the fitted density
        # agrees with the independent fit up to Monte Carlo error
        rng = np.random.default_rng(6)
        path = tmp_path / "one.csv"
        path.write_text("group,y\n" + "\n".join(f"only,{v:.6f}" for v in rng.normal(1, 1, 45)) + "\n")
        out_a = tmp_path / "thinned"
        out_b = tmp_path / "nopool"
        sa = fit_csv(path, out_a, config=ModelConfig(truncation=30, mode="thinned"),
                     iterations=900, burn_in=300, seed=2, grid_points=200)
        sb = fit_csv(path, out_b, config=ModelConfig(truncation=30, mode="no_pooling"),
                     iterations=900, burn_in=300, seed=3, grid_points=200)
        grid = np.linspace(-3, 5, 300)
        da = density_estimate(sa, grid)
        db = density_estimate(sb, grid)
        assert tv_distance(da.estimate[0], db.estimate[0], grid[1] - grid[0]) < 0.05

    def test_save_draws(self, tmp_path):
        data_path = tmp_path / "toy.csv"
        self._write_toy(data_path)
        out = tmp_path / "fitd"
        samples = fit_csv(
            data_path, out, config=ModelConfig(truncation=10),
            iterations=40, burn_in=30, seed=4, grid_points=10, with_draws=True,
        )
        for name in ("allocations.csv", "weights.csv", "atoms.csv",
                     "thinning.csv", "keep_probs.csv"):
            assert (out / "draws" / name).exists()
        with open(out / "draws" / "weights.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        assert len(rows) == samples.n_draws * 10 * 2
        manifest = json.loads((out / "draws" / "manifest.json").read_text())
        assert manifest["kind"] == "draws"
        assert manifest["seed"] == 4
        assert manifest["config"]["truncation"] == 10
        assert manifest["wall_clock_s"] > 0


class TestThinningModelRecords:
    MODELS = [
        BernoulliThinning((0.3, 0.8)),
        EventuallySingleAtomThinning(starts=(1, 4)),
        EventuallySingleAtomThinning(rates=(2.0, 0.5)),
        DependentBernoulliThinning(0.4, 0.1, 0.2, 0.3),
        SymmetricBlockedThinning(blocks=(1, 2, 3)),
        SymmetricBlockedThinning(rates=(1.0, 2.0, 0.5)),
    ]

    @pytest.mark.parametrize("model", MODELS, ids=lambda m: type(m).__name__)
    def test_round_trip(self, model):
        record = thinning_model_to_dict(model)
        json.dumps(record)  # must be JSON-serializable
        assert thinning_model_from_dict(record) == model

    def test_unknown_kind(self):
        with pytest.raises(DataError, match="kind"):
            thinning_model_from_dict({"kind": "nope"})

    def test_unknown_key(self):
        with pytest.raises(DataError, match="unknown keys"):
            thinning_model_from_dict({"kind": "bernoulli", "keep_probs": [0.5], "extra": 1})

    def test_invalid_parameters(self):
        with pytest.raises(DataError, match="invalid"):
            thinning_model_from_dict({"kind": "bernoulli", "keep_probs": [0.0]})

    def test_prior_mc_model_file(self, tmp_path):
        record = {"kind": "dependent_bernoulli", "p11": 0.4, "p10": 0.1, "p01": 0.2, "p00": 0.3}
        model_path = tmp_path / "model.json"
        model_path.write_text(json.dumps(record))
        out = tmp_path / "mc.csv"
        code = main([
            "prior-mc", "--model-file", str(model_path), "--alpha", "1",
            "--sizes", "15", "--replications", "200", "--truncation", "150",
            "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 2
        assert rows[1][0] == "dependent_bernoulli"


class TestScenarioLoading:
    def test_round_trip(self, tmp_path):
        path = write_config(tmp_path / "cfg.json")
        scenario = load_scenario(path)
        assert scenario == tiny_scenario()

    def test_schema_version_enforced(self, tmp_path):
        path = write_config(tmp_path / "cfg.json", schema_version=2)
        with pytest.raises(DataError, match="schema_version"):
            load_scenario(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path / "cfg.json", bogus=1)
        with pytest.raises(DataError, match="bogus"):
            load_scenario(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"schema_version": 1, "name": "x"}))
        with pytest.raises(DataError, match="missing required"):
            load_scenario(path)


class TestCLI:
    def test_usage_error_exit_code(self, capsys):
        assert main(["simulate"]) == 1
        assert main([]) == 1

    def test_data_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("group,y\nA,xyz\n")
        code = main(["fit", "--input", str(bad), "--out", str(tmp_path / "o"),
                     "--iterations", "20", "--burn-in", "10"])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_runtime_failure_exit_code(self, tmp_path, monkeypatch, capsys):
        import thinddp.harness as hm

        def boom(scenario, replication):
            raise RuntimeError("chain exploded")

        monkeypatch.setattr(hm, "_run_replication", boom)
        cfg = write_config(tmp_path / "cfg.json")
        code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 3
        assert "failed" in capsys.readouterr().err

    def test_analytics_json_output(self, capsys):
        assert main(["analytics", "bernoulli", "--alpha", "1", "--p1", "0.5", "--p2", "1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["value"] == pytest.approx(2 / 3.5)
        assert payload["truncation_error"] == 0.0

    def test_analytics_validation_maps_to_data_error(self, capsys):
        assert main(["analytics", "bernoulli", "--alpha", "-1", "--p1", "0.5", "--p2", "1"]) == 2

    def test_analytics_every_formula_through_cli(self, capsys):
        invocations = [
            ["conditional", "--alpha", "1", "--seq1", "1,1,1", "--seq2", "0,1,1", "--tail"],
            ["eventually", "--alpha", "2", "--u1", "1", "--u2", "4"],
            ["bernoulli", "--alpha", "1", "--p1", "0.5", "--p2", "0.5"],
            ["poisson", "--alpha", "1", "--rate1", "1", "--rate2", "1"],
            ["poisson-diff", "--alpha", "1", "--rate", "1"],
            ["dependent-bernoulli", "--alpha", "1", "--p-both", "0.4", "--p-neither", "0.3"],
            ["symmetric-blocked", "--alpha", "1", "--b0", "1", "--b1", "1", "--b2", "1"],
            ["symmetric-poisson", "--alpha", "1", "--rate0", "1", "--rate1", "1", "--rate2", "1"],
            ["parent-conditional", "--alpha", "1", "--seq1", "0,1,1", "--tail"],
            ["parent-eventually", "--alpha", "1", "--u1", "2"],
            ["parent-bernoulli", "--alpha", "1", "--p1", "0.5"],
            ["parent-poisson", "--alpha", "1", "--rate1", "1"],
            ["expected-k-bounds", "--alpha", "1", "--n1", "10", "--n2", "10"],
            ["expected-k-exact", "--alpha", "1", "--n1", "5", "--n2", "5", "--u1", "1", "--u2", "3"],
            ["bessel-i", "--order", "1", "--x", "2"],
        ]
        for argv in invocations:
            assert main(["analytics"] + argv) == 0, argv
            payload = json.loads(capsys.readouterr().out)
            assert all(np.isfinite(v) for v in payload.values()), argv

    def test_prior_mc_csv(self, tmp_path):
        out = tmp_path / "curves.csv"
        code = main([
            "prior-mc", "--model", "bernoulli", "--alpha", "1",
            "--values", "0.5,1.0", "--sizes", "10,20",
            "--replications", "200", "--truncation", "120",
            "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:5] == ["model", "alpha", "param", "n1", "n2"]
        assert len(rows) == 1 + 4
        for row in rows[1:]:
            assert float(row[13]) <= float(row[11]) + 3 * float(row[12])  # lower <= ek + 3se
            assert float(row[11]) <= float(row[14]) + 3 * float(row[12])  # ek <= upper + 3se

    def test_fit_cli_smoke(self, tmp_path):
        data = tmp_path / "toy.csv"
        rng = np.random.default_rng(8)
        data.write_text("group,y\n" + "\n".join(f"g,{v:.4f}" for v in rng.normal(0, 1, 10)) + "\n")
        code = main(["fit", "--input", str(data), "--out", str(tmp_path / "o"),
                     "--iterations", "40", "--burn-in", "20", "--truncation", "10",
                     "--grid-points", "15"])
        assert code == 0
        assert (tmp_path / "o" / "density.csv").exists()


def test_default_grid_rule():
    values = np.array([0.0, 10.0])
    grid = default_grid(values, 300)
    assert grid.size == 300
    assert grid[0] == pytest.approx(0.0 - 3 * values.std())
    assert grid[-1] == pytest.approx(10.0 + 3 * values.std())
