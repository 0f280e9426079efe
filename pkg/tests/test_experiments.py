import json

import numpy as np
import pandas as pd
import pytest

from src.core.config import load_config
from src.estimation.estimators import Method
from src.experiments.reports import (
    ExperimentResult,
    ReportFormat,
    dump_json,
    jsonable,
    write_result,
)
from src.experiments.runner import (
    BOUNDARY_SIGMAS,
    ExperimentId,
    ExperimentRunner,
    RunSettings,
)


@pytest.fixture
def settings():
    return RunSettings(
        reps=2,
        seed=7,
        threads=1,
        ridge_lambda=25.0,
        folds=5,
        alpha=0.05,
        mc_points=100_000,
    )


@pytest.fixture
def runner(settings):
    return ExperimentRunner(settings)


class TestJsonable:
    def test_plain_values(self):
        payload = {
            "a": np.float64(1.5),
            "b": np.int64(3),
            "c": np.array([1.0, np.nan]),
            "d": Method.ORACLE,
            "e": (np.bool_(True), float("inf")),
            1: None,
        }
        assert jsonable(payload) == {
            "a": 1.5,
            "b": 3,
            "c": [1.0, None],
            "d": "oracle",
            "e": [True, None],
            "1": None,
        }

    def test_dump_is_sorted_and_terminated(self):
        text = dump_json({"b": 1, "a": float("nan")})
        assert text.endswith("}\n")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": None, "b": 1}


class TestWriteResult:
    @pytest.fixture
    def result(self):
        table = pd.DataFrame({"n": [500, 1000], "bias": [0.1, float("nan")]})
        return ExperimentResult(experiment="demo", tables={"demo": table}, meta={"seed": 1})

    def test_csv(self, result, tmp_path):
        paths = write_result(result, tmp_path, ReportFormat.CSV)
        assert [p.name for p in paths] == ["demo.csv", "demo.meta.json"]
        lines = (tmp_path / "demo.csv").read_text().splitlines()
        assert lines == ["n,bias", "500,0.1", "1000,"]
        meta = json.loads((tmp_path / "demo.meta.json").read_text())
        assert meta == {"experiment": "demo", "meta": {"seed": 1}}

    def test_json(self, result, tmp_path):
        (path,) = write_result(result, tmp_path / "nested", "json")
        payload = json.loads(path.read_text())
        assert path.name == "demo.json"
        assert payload["tables"]["demo"] == [
            {"n": 500, "bias": 0.1},
            {"n": 1000, "bias": None},
        ]

    def test_rerun_is_byte_identical(self, result, tmp_path):
        first = write_result(result, tmp_path / "a", ReportFormat.CSV)
        second = write_result(result, tmp_path / "b", ReportFormat.CSV)
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()


class TestRunSettings:
    def test_from_config_overrides(self, monkeypatch):
        monkeypatch.setenv("LATENTGAP_REPS", "50")
        settings = RunSettings.from_config(load_config(), seed=3, threads=4)
        assert settings.reps == 50
        assert settings.seed == 3
        assert settings.threads == 4
        assert "threads" not in settings.to_dict()

    def test_experiments_use_heavier_penalty(self, monkeypatch):
        monkeypatch.delenv("LATENTGAP_EXPERIMENT_LAMBDA", raising=False)
        monkeypatch.delenv("LATENTGAP_RIDGE_LAMBDA", raising=False)
        config = load_config()
        settings = RunSettings.from_config(config)
        assert settings.ridge_lambda == 25.0
        assert config.estimation.ridge_lambda == 1.0



class TestExperimentTables:
    def test_table1(self, runner):
        result = runner.run(ExperimentId.TABLE1)
        table = result.tables["table1"]
        assert len(table) == 9
        assert set(table["estimator"]) == {"oracle", "plugin", "orthogonal"}
        assert list(table.columns[:2]) == ["estimator", "n"]
        assert (table["n_finite"] + table["n_failed"] == 2).all()
        assert len(result.meta["cells"]) == 9
        assert result.meta["settings"]["seed"] == 7

    def test_table2(self, runner):
        table = runner.table2().tables["table2"]
        assert table["sigma_u"].tolist() == list(BOUNDARY_SIGMAS)
        assert table["true_v_star"].is_monotonic_decreasing

    def test_table3(self, runner):
        table = runner.table3().tables["table3"]
        assert len(table) == 12
        assert list(table.columns) == [
            "shape",
            "delta",
            "emp_bias",
            "theo_bias",
            "theo_bias_clipped",
            "sharp_bound",
            "tightness",
            "coverage",
            "n_finite",
        ]
        assert (table["theo_bias"].abs() <= table["sharp_bound"] * (1.0 + 1e-12)).all()

    def test_table4(self, runner):
        table = runner.table4().tables["table4"]
        assert len(table) == 12
        assert set(table["estimator"]) == {m.value for m in Method}
        kappa = table.groupby("sigma_u")["kappa"].first()
        assert kappa.is_monotonic_increasing
        assert ((kappa > 0.0) & (kappa < 1.0)).all()

    def test_table5(self, runner):
        table = runner.table5().tables["table5"]
        assert set(table["design"]) == {"hetero_A", "hetero_B"}
        tau_bar = table.groupby("design")["tau_bar"].first()
        assert tau_bar["hetero_A"] == pytest.approx(1.0, abs=0.02)
        assert tau_bar["hetero_B"] > 1.2

    def test_figure_attenuation_is_long_form(self, runner):
        table = runner.figure_attenuation().tables["figure_attenuation"]
        assert len(table) == 3 * 4 * 2
        assert set(table["replication"]) == {0, 1}

    def test_figure_boundary_reference_is_anchored(self, runner):
        table = runner.figure_boundary().tables["figure_boundary"]
        first = table.iloc[0]
        assert first["reference"] == pytest.approx(first["rmse"])

    def test_same_seed_same_tables(self, settings):
        a = ExperimentRunner(settings).table2().tables["table2"]
        b = ExperimentRunner(settings).table2().tables["table2"]
        pd.testing.assert_frame_equal(a, b)

    def test_unknown_experiment(self, runner):
        with pytest.raises(ValueError):
            runner.run("table9")


@pytest.mark.slow
class TestExperimentShapes:
    def test_figure_qq(self, settings):
        settings.reps = 200
        result = ExperimentRunner(settings).figure_qq()
        assert sorted(result.tables) == ["figure_qq_n1000", "figure_qq_n500", "figure_qq_n5000"]
        for n, stats in result.meta["ks"].items():
            assert not stats["degenerate"]
            assert stats["statistic"] < 0.15

    def test_hard_threshold_attenuates_by_kappa(self, settings):
        settings.reps = 200
        table = ExperimentRunner(settings).table4().tables["table4"]
        hard = table[table["estimator"] == "hard_threshold"]
        for _, row in hard.iterrows():
            assert row["mean_tau"] == pytest.approx(row["kappa"], abs=0.05)
        oracle = table[(table["estimator"] == "oracle") & (table["sigma_u"] >= 0.2)]
        assert (oracle["bias"].abs() < 0.15).all()


def _pooled_coverage(table):
    return float((table["coverage"] * table["n_finite"]).sum() / table["n_finite"].sum())


@pytest.mark.slow
class TestReplicationTargets:
    @pytest.fixture
    def runner(self, settings):
        settings.reps = 300
        return ExperimentRunner(settings)

    def test_table1_plugin_bias_and_orthogonal_coverage(self, runner):
        table = runner.table1().tables["table1"]
        plugin = table[(table["estimator"] == "plugin") & (table["n"] == 500)].iloc[0]
        assert 0.05 <= plugin["bias"] <= 0.30
        orthogonal = table[table["estimator"] == "orthogonal"]
        assert 0.93 <= _pooled_coverage(orthogonal) <= 0.97

    def test_table2_rmse_grows_toward_boundary(self, runner):
        table = runner.table2().tables["table2"]
        assert table["rmse"].is_monotonic_increasing
        rmse = table.set_index("sigma_u")["rmse"]
        assert 29.0 <= rmse[0.05] / rmse[0.5] <= 116.0

    def test_table3_worst_case_bias_is_near_the_bound(self, runner):
        table = runner.table3().tables["table3"]
        worst = table[(table["shape"] == "worst_case") & (table["delta"] >= 0.10)]
        assert worst["tightness"].mean() >= 0.85
        assert ((worst["emp_bias"] - worst["theo_bias_clipped"]).abs() < 0.15).all()

    def test_table4_hard_threshold_matches_kappa(self, runner):
        table = runner.table4().tables["table4"]
        hard = table[table["estimator"] == "hard_threshold"]
        assert (hard["attenuation_gap"].abs() <= 0.02).all()

    def test_table5_design_b_coverage(self, runner):
        table = runner.table5().tables["table5"]
        design_b = table[table["design"] == "hetero_B"]
        assert 0.93 <= _pooled_coverage(design_b) <= 0.97

    def test_figure_qq_close_to_normal(self, settings):
        settings.reps = 2000
        result = ExperimentRunner(settings).figure_qq()
        for stats in result.meta["ks"].values():
            assert stats["statistic"] < 0.035
