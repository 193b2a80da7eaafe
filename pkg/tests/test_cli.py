import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.stats import false_discovery_control

from remeasure import fit_batch2, fit_mle, fit_naive
from remeasure.cli import bh_qvalues, main, read_long_csv

from conftest import gaussian_dataset


def dataset_to_long_csv(data, path):
    """Write a validated dataset in the long CSV layout the CLI reads."""
    d = data.design
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        z_names = [f"z{j}" for j in range(1, d.p)]
        writer.writerow(["sample_id", "pair_id", "group", "batch", "y", *z_names])
        re_start = d.n1 + d.n2
        for i in range(d.n_rows):
            pid = ""
            if data.x[i] == 0 and data.batch[i] == 1 and i < d.n1_prime:
                pid = f"P{i}"
            elif i >= re_start:
                pid = f"P{data.pair_index[i - re_start]}"
            writer.writerow(
                [f"S{i}", pid, data.x[i], data.batch[i], repr(float(data.y[i]))]
                + [repr(float(v)) for v in data.z[i, 1:]]
            )


def write_feature_inputs(tmp_path, n_features=24, seed=11):
    """Metadata plus features-by-samples matrix sharing one design."""
    data = gaussian_dataset(seed, n1=30, n2=30, n1_prime=15)
    d = data.design
    meta = tmp_path / "meta.csv"
    with open(meta, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "pair_id", "group", "batch", "z1"])
        re_start = d.n1 + d.n2
        for i in range(d.n_rows):
            pid = ""
            if data.x[i] == 0 and data.batch[i] == 1 and i < d.n1_prime:
                pid = f"P{i}"
            elif i >= re_start:
                pid = f"P{data.pair_index[i - re_start]}"
            writer.writerow([f"S{i}", pid, data.x[i], data.batch[i], repr(float(data.z[i, 1]))])

    rng = np.random.default_rng(seed + 1)
    feats = tmp_path / "features.csv"
    with open(feats, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_id"] + [f"S{i}" for i in range(d.n_rows)])
        for g in range(n_features):
            other = gaussian_dataset(1000 + seed * 97 + g, n1=30, n2=30, n1_prime=15,
                                     a0=0.6 if g % 3 == 0 else 0.0)
            writer.writerow([f"G{g}"] + [repr(float(v)) for v in other.y])
    return meta, feats


@pytest.fixture
def demo_csv(tmp_path):
    data = gaussian_dataset(7)
    path = tmp_path / "demo.csv"
    dataset_to_long_csv(data, path)
    return str(path), data


class TestReadLongCsv:
    def test_round_trip(self, demo_csv):
        path, data = demo_csv
        loaded = read_long_csv(path)
        np.testing.assert_allclose(loaded.y, data.y)
        np.testing.assert_allclose(loaded.z, data.z)
        np.testing.assert_array_equal(loaded.pair_index, data.pair_index)
        assert loaded.design == data.design

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("sample_id,group,batch,y\nS0,0,1,1.0\n")
        with pytest.raises(ValueError, match="missing required columns"):
            read_long_csv(path)

    def test_unknown_pair_id(self, tmp_path, demo_csv):
        path, _ = demo_csv
        rows = open(path).read().splitlines()
        rows[-1] = rows[-1].replace("P", "Q", 1)
        bad = tmp_path / "bad_pair.csv"
        bad.write_text("\n".join(rows) + "\n")
        with pytest.raises(ValueError, match="no batch-1 original"):
            read_long_csv(bad)

    def test_non_numeric_value(self, tmp_path):
        path = tmp_path / "bad_num.csv"
        path.write_text("sample_id,pair_id,group,batch,y\nS0,,0,1,oops\n")
        with pytest.raises(ValueError, match="non-numeric"):
            read_long_csv(path)


class TestBenjaminiHochberg:
    def test_matches_scipy(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            p = rng.uniform(size=rng.integers(1, 60))
            np.testing.assert_allclose(bh_qvalues(p), false_discovery_control(p), rtol=1e-12)

    def test_monotone_in_rank(self):
        p = np.array([0.001, 0.02, 0.02, 0.3, 0.9])
        q = bh_qvalues(p)
        assert np.all(np.diff(q[np.argsort(p)]) >= -1e-15)
        assert np.all(q <= 1.0) and np.all(q >= p - 1e-15)


class TestFitCommand:
    def test_happy_path(self, demo_csv):
        path, data = demo_csv
        result = CliRunner().invoke(main, ["fit", path])
        assert result.exit_code == 0, result.output
        doc = json.loads(result.output)
        fit = fit_mle(data)
        assert doc["fit"]["converged"] is True
        np.testing.assert_allclose(doc["fit"]["a0"], fit.theta.a0, rtol=1e-12)
        np.testing.assert_allclose(doc["test"]["estimate"], fit.theta.a0, rtol=1e-12)
        assert 0.0 <= doc["test"]["p_value"] <= 1.0
        assert doc["test"]["method"] == "remeasure"

    def test_baseline_method(self, demo_csv):
        path, data = demo_csv
        result = CliRunner().invoke(main, ["fit", path, "--method", "batch2"])
        assert result.exit_code == 0
        doc = json.loads(result.output)
        ref = fit_batch2(data)
        np.testing.assert_allclose(doc["test"]["estimate"], ref.estimate, rtol=1e-12)
        np.testing.assert_allclose(doc["test"]["p_value"], ref.p_value, rtol=1e-12)
        assert "fit" not in doc

    def test_bootstrap_deterministic(self, demo_csv):
        path, _ = demo_csv
        args = ["--seed", "3", "fit", path, "--bootstrap", "150"]
        first = CliRunner().invoke(main, args)
        second = CliRunner().invoke(main, args)
        assert first.exit_code == 0
        assert first.output == second.output
        doc = json.loads(first.output)
        assert doc["test"]["extra"]["replicates"] == 150

    def test_bad_csv_exits_2(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("sample_id,group,batch,y\nS0,0,1,1.0\n")
        runner = CliRunner()
        result = runner.invoke(main, ["fit", str(path)])
        assert result.exit_code == 2
        err = json.loads(result.stderr)
        assert err["category"] == "input"
        assert "missing required columns" in err["error"]

    def test_batch2_without_remeasured_exits_2(self, tmp_path):
        data = gaussian_dataset(3, n1_prime=0)
        path = tmp_path / "no_pairs.csv"
        dataset_to_long_csv(data, path)
        runner = CliRunner()
        result = runner.invoke(main, ["fit", str(path), "--method", "batch2"])
        assert result.exit_code == 2
        assert "no controls in batch 2" in json.loads(result.stderr)["error"]

    def test_bootstrap_with_baseline_exits_2(self, demo_csv):
        path, _ = demo_csv
        runner = CliRunner()
        result = runner.invoke(main, ["fit", path, "--method", "ls", "--bootstrap", "50"])
        assert result.exit_code == 2

    def test_unexpected_error_exits_4(self, demo_csv, monkeypatch):
        path, _ = demo_csv
        import remeasure.cli as cli_mod

        def boom(*args, **kwargs):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(cli_mod, "fit_mle", boom)
        result = CliRunner().invoke(main, ["fit", path])
        assert result.exit_code == 4
        err = json.loads(result.stderr)
        assert err["category"] == "internal"
        assert "synthetic failure" in err["error"]

    def test_output_file(self, demo_csv, tmp_path):
        path, _ = demo_csv
        out = tmp_path / "res.json"
        result = CliRunner().invoke(main, ["fit", path, "--output", str(out)])
        assert result.exit_code == 0
        assert json.loads(out.read_text())["fit"]["converged"] is True


class TestPerFeature:
    def test_qvalues_match_independent_bh(self, tmp_path):
        meta, feats = write_feature_inputs(tmp_path)
        result = CliRunner().invoke(
            main,
            ["--json", "fit", str(feats), "--per-feature", "--metadata", str(meta),
             "--method", "naive", "--fdr", "0.05"],
        )
        assert result.exit_code == 0, result.output
        records = json.loads(result.output)
        assert [r["feature_id"] for r in records] == [f"G{g}" for g in range(24)]
        pvals = np.array([r["p_value"] for r in records])
        qvals = np.array([r["q_value"] for r in records])
        np.testing.assert_allclose(qvals, false_discovery_control(pvals), rtol=1e-12)
        for rec in records:
            assert rec["significant"] == (rec["q_value"] <= 0.05)

    def test_matches_direct_naive_fit(self, tmp_path):
        meta, feats = write_feature_inputs(tmp_path, n_features=6)
        result = CliRunner().invoke(
            main,
            ["--json", "fit", str(feats), "--per-feature", "--metadata", str(meta),
             "--method", "naive"],
        )
        records = json.loads(result.output)
        with open(feats) as fh:
            rows = list(csv.reader(fh))
        from remeasure.cli import _dataset_from_metadata, read_feature_matrix
        meta_rows, _, matrix = read_feature_matrix(feats, meta)
        for g, rec in enumerate(records):
            ref = fit_naive(_dataset_from_metadata(meta_rows, matrix[g]))
            np.testing.assert_allclose(rec["estimate"], ref.estimate, rtol=1e-12)
            np.testing.assert_allclose(rec["p_value"], ref.p_value, rtol=1e-12)

    def test_threads_do_not_change_output(self, tmp_path):
        meta, feats = write_feature_inputs(tmp_path, n_features=8)
        base = ["--json", "fit", str(feats), "--per-feature", "--metadata", str(meta),
                "--method", "naive"]
        one = CliRunner().invoke(main, ["--threads", "1"] + base)
        two = CliRunner().invoke(main, ["--threads", "2"] + base)
        assert one.exit_code == 0 and two.exit_code == 0
        assert one.output == two.output

    def test_env_thread_fallback(self, tmp_path):
        meta, feats = write_feature_inputs(tmp_path, n_features=4)
        result = CliRunner().invoke(
            main,
            ["--json", "fit", str(feats), "--per-feature", "--metadata", str(meta),
             "--method", "naive"],
            env={"REMEASURE_THREADS": "2"},
        )
        assert result.exit_code == 0

    def test_requires_metadata(self, tmp_path):
        meta, feats = write_feature_inputs(tmp_path, n_features=2)
        runner = CliRunner()
        result = runner.invoke(main, ["fit", str(feats), "--per-feature"])
        assert result.exit_code == 2

    def test_mismatched_columns_exit_2(self, tmp_path):
        meta, feats = write_feature_inputs(tmp_path, n_features=2)
        text = feats.read_text().replace("S0", "WRONG", 1)
        feats.write_text(text)
        runner = CliRunner()
        result = runner.invoke(main, ["fit", str(feats), "--per-feature", "--metadata", str(meta)])
        assert result.exit_code == 2
        assert "do not match" in json.loads(result.stderr)["error"]

    def test_csv_output_mode(self, tmp_path):
        meta, feats = write_feature_inputs(tmp_path, n_features=3)
        result = CliRunner().invoke(
            main, ["fit", str(feats), "--per-feature", "--metadata", str(meta),
                   "--method", "naive"],
        )
        assert result.exit_code == 0
        lines = result.output.strip().splitlines()
        assert lines[0].startswith("feature_id,estimate,stderr,z,p_value,q_value")
        assert len(lines) == 4


class TestSimulateCommand:
    def test_smoke_run_writes_files(self, tmp_path):
        prefix = tmp_path / "out"
        result = CliRunner().invoke(
            main,
            ["simulate", "scenarios/null_m25.json", "--reps", "10",
             "--methods", "remeasure,naive", "--output", str(prefix)],
        )
        assert result.exit_code == 0, result.output
        doc = json.loads((tmp_path / "out.json").read_text())
        assert doc["replicates"] == 10
        assert set(doc["rejection_rate"]) == {"remeasure", "naive"}
        rows = list(csv.DictReader(open(tmp_path / "out.csv")))
        assert {r["method"] for r in rows} == {"remeasure", "naive"}

    def test_same_seed_identical_files(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            prefix = tmp_path / name
            result = CliRunner().invoke(
                main,
                ["--seed", "42", "simulate", "scenarios/null_m25.json",
                 "--reps", "6", "--methods", "naive", "--output", str(prefix)],
            )
            assert result.exit_code == 0
            outputs.append((prefix.with_suffix(".json").read_text(),
                            prefix.with_suffix(".csv").read_text()))
        assert outputs[0] == outputs[1]

    def test_bad_scenario_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        runner = CliRunner()
        result = runner.invoke(main, ["simulate", str(bad)])
        assert result.exit_code == 2

    def test_unknown_method_exits_2(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(
            main,
            ["simulate", "scenarios/null_m25.json", "--reps", "2",
             "--methods", "nonsense", "--output", str(tmp_path / "x")],
        )
        assert result.exit_code == 2


class TestPowerCommand:
    BASE = ["power", "--n1", "50", "--n2", "50", "--rho", "0.6", "--d", "0.6", "--alpha", "0.05"]

    def test_absolute_target(self):
        result = CliRunner().invoke(main, self.BASE + ["--target", "0.8", "--mode", "absolute"])
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert doc["achievable"] is True
        assert abs(doc["n1_prime"] - 35) <= 2

    def test_relative_target(self):
        result = CliRunner().invoke(main, self.BASE + ["--target", "0.8", "--mode", "relative"])
        doc = json.loads(result.output)
        assert abs(doc["n1_prime"] - 19) <= 2

    def test_unachievable_target(self):
        result = CliRunner().invoke(
            main,
            ["power", "--n1", "50", "--n2", "50", "--rho", "0.6", "--d", "0.1",
             "--target", "0.9", "--mode", "absolute"],
        )
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert doc["achievable"] is False and doc["n1_prime"] is None
        assert 0.0 < doc["max_achievable_power"] < 0.9

    def test_single_point(self):
        result = CliRunner().invoke(main, self.BASE + ["--n1-prime", "25"])
        doc = json.loads(result.output)
        assert doc["n1_prime"] == 25
        assert 0.0 <= doc["absolute_power"] <= doc["optimal_power"] <= 1.0

    def test_range_emits_monotone_csv(self):
        result = CliRunner().invoke(main, self.BASE + ["--n1-prime", "2..50"])
        assert result.exit_code == 0
        lines = result.output.strip().splitlines()
        assert lines[0] == "n1_prime,absolute_power,relative_power,optimal_power,oracle_sd"
        absolute = [float(line.split(",")[1]) for line in lines[1:]]
        assert len(absolute) == 49
        assert all(b >= a - 1e-12 for a, b in zip(absolute, absolute[1:]))

    def test_requires_prime_or_target(self):
        runner = CliRunner()
        result = runner.invoke(main, self.BASE)
        assert result.exit_code == 2

    def test_invalid_rho_exits_2(self):
        runner = CliRunner()
        result = runner.invoke(
            main,
            ["power", "--n1", "50", "--n2", "50", "--rho", "1.5", "--d", "0.6",
             "--n1-prime", "10"],
        )
        assert result.exit_code == 2
