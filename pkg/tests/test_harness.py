import json

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from forum_moblo.harness import (
    NOT_REACHED,
    benchmark_complexity,
    compare_methods,
    expand_compare_configs,
    parse_experiment_config,
    run_experiment,
)
from forum_moblo.harness.cli import app
from forum_moblo.harness.config.settings import Settings, get_settings, reset_settings
from forum_moblo.harness.experiment import aggregate_runs, check_capabilities, plan_units
from forum_moblo.harness.outputs import config_sha256, read_trace_csv, trace_columns
from forum_moblo.shared.errors import CapabilityError, ConfigurationError, DivergenceError

SYNTHETIC_DOC = {
    "name": "synthetic",
    "problem": {"kind": "synthetic"},
    "method": "forum",
    "forum": {"K": 40, "T": 20, "mu": 0.3, "eta": 0.05, "rho": 0.3},
    "initializations": "standard",
}

runner = CliRunner()


def write_config(tmp_path, document, name="experiment.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return path


def with_updates(document, **updates):
    return {**document, **updates}


class TestConfigParsing:
    def test_parses_synthetic_document(self):
        config = parse_experiment_config(json.dumps(SYNTHETIC_DOC))
        assert config.method == "forum"
        assert config.resolved_seeds() == [0]
        forum = config.to_forum_config(seed=5)
        assert (forum.K, forum.T, forum.mu, forum.seed) == (40, 20, 0.3, 5)
        assert forum.qp.polish

    def test_qp_options_reach_the_solver_config(self):
        document = with_updates(SYNTHETIC_DOC, forum={**SYNTHETIC_DOC["forum"], "qp_polish": False, "qp_max_iters": 50})
        qp = parse_experiment_config(json.dumps(document)).to_forum_config(seed=0).qp
        assert (qp.polish, qp.max_iters) == (False, 50)

    def test_invalid_method_names_the_field(self):
        with pytest.raises(ConfigurationError, match="method"):
            parse_experiment_config(json.dumps(with_updates(SYNTHETIC_DOC, method="bome")))

    def test_unknown_key_names_the_path(self):
        document = with_updates(SYNTHETIC_DOC, forum={**SYNTHETIC_DOC["forum"], "momentum": 0.9})
        with pytest.raises(ConfigurationError, match="forum.momentum"):
            parse_experiment_config(json.dumps(document))

    def test_json_syntax_error_has_position(self):
        with pytest.raises(ConfigurationError, match="line 1 column"):
            parse_experiment_config('{"name": "x",')

    def test_missing_method_section(self):
        document = {key: value for key, value in SYNTHETIC_DOC.items() if key != "forum"}
        with pytest.raises(ConfigurationError, match="forum"):
            parse_experiment_config(json.dumps(document))

    def test_repeat_must_match_seeds(self):
        with pytest.raises(ConfigurationError, match="repeat"):
            parse_experiment_config(json.dumps(with_updates(SYNTHETIC_DOC, seeds=[1, 2], repeat=3)))

    def test_repeat_without_seeds(self):
        config = parse_experiment_config(json.dumps(with_updates(SYNTHETIC_DOC, repeat=3)))
        assert config.resolved_seeds() == [0, 1, 2]

    def test_sweep_expands_cartesian_product(self):
        config = parse_experiment_config(
            json.dumps(with_updates(SYNTHETIC_DOC, sweep={"rho": [0.1, 0.5], "eta": [0.01, 0.05]}, seeds=[1, 2]))
        )
        assert len(config.sweep_points()) == 4
        assert len(plan_units(config, config.resolved_seeds())) == 2 * 3 * 4
        assert config.to_forum_config(1, {"rho": 0.1}).rho == 0.1


class TestCapabilityCheck:
    def test_moml_exact_on_hyperclean_is_rejected(self):
        config = parse_experiment_config(
            json.dumps(
                {
                    "problem": {"kind": "hyperclean"},
                    "method": "moml_exact",
                    "moml": {"K": 5, "mu": 0.1},
                }
            )
        )
        with pytest.raises(CapabilityError) as excinfo:
            check_capabilities(config)
        assert excinfo.value.capability == "exact_ll_solution"

    def test_standard_starts_need_synthetic(self):
        config = parse_experiment_config(
            json.dumps(with_updates(SYNTHETIC_DOC, problem={"kind": "random_quadratic", "n": 2, "p": 3}))
        )
        with pytest.raises(ConfigurationError, match="initializations"):
            check_capabilities(config)


class TestRunExperiment:
    def test_writes_traces_and_summary(self, tmp_path):
        summary = run_experiment(parse_experiment_config(json.dumps(SYNTHETIC_DOC)), tmp_path)
        assert len(summary["runs"]) == 3
        assert summary["config_sha256"] == config_sha256(summary["config"])

        frame, provenance = read_trace_csv(tmp_path / summary["runs"][0]["trace_file"])
        assert list(frame.columns) == trace_columns(2)
        assert len(frame) == 40
        assert frame["k"].tolist() == list(range(40))
        assert provenance["config_sha256"] == summary["config_sha256"]
        assert provenance["seed"] == "0"
        assert json.loads(provenance["config"]) == summary["config"]

        stored = json.loads((tmp_path / "synthetic__summary.json").read_text())
        assert stored["seeds"] == [0]
        assert {a["initialization"] for a in stored["aggregates"]} == {"init0", "init1", "init2"}

    def test_unavailable_metrics_are_empty_fields(self, tmp_path):
        document = {
            "name": "quad",
            "problem": {"kind": "random_quadratic", "n": 2, "p": 3, "m": 2},
            "method": "moml_unrolled",
            "moml": {"K": 5, "mu": 0.05, "T": 3},
        }
        summary = run_experiment(parse_experiment_config(json.dumps(document)), tmp_path)
        trace_path = tmp_path / summary["runs"][0]["trace_file"]
        header, first_row = [line for line in trace_path.read_text().splitlines() if not line.startswith("#")][:2]
        cells = dict(zip(header.split(","), first_row.split(",")))
        assert cells["q_tilde"] == ""
        assert cells["optimality_gap"] == ""
        assert cells["q_exact"] != ""

    def test_seed_override_and_rerun_is_reproducible(self, tmp_path):
        document = {
            "name": "quad",
            "problem": {"kind": "random_quadratic", "n": 2, "p": 3, "m": 2},
            "forum": {"K": 15, "T": 3, "mu": 0.05, "eta": 0.1},
            "initializations": [{"scale": 1.0}],
            "seeds": [4, 5],
        }
        config = parse_experiment_config(json.dumps(document))
        first = run_experiment(config, tmp_path / "a", seed=9)
        second = run_experiment(config, tmp_path / "b", seed=9)
        assert first["seeds"] == [9]
        trace_a, _ = read_trace_csv(tmp_path / "a" / first["runs"][0]["trace_file"])
        trace_b, _ = read_trace_csv(tmp_path / "b" / second["runs"][0]["trace_file"])
        pd.testing.assert_frame_equal(trace_a.drop(columns="wall_time_s"), trace_b.drop(columns="wall_time_s"))

    def test_embedded_config_replays_a_seed_override(self, tmp_path):
        document = {
            "name": "quad",
            "problem": {"kind": "random_quadratic", "n": 2, "p": 3, "m": 2},
            "forum": {"K": 15, "T": 3, "mu": 0.05, "eta": 0.1},
            "initializations": [{"scale": 1.0}],
            "seeds": [4, 5],
        }
        first = run_experiment(parse_experiment_config(json.dumps(document)), tmp_path / "a", seed=9)
        original, provenance = read_trace_csv(tmp_path / "a" / first["runs"][0]["trace_file"])
        embedded = parse_experiment_config(provenance["config"])
        assert embedded.resolved_seeds() == [9]
        assert provenance["config_sha256"] == first["config_sha256"]

        replay = run_experiment(embedded, tmp_path / "b")
        replayed, _ = read_trace_csv(tmp_path / "b" / replay["runs"][0]["trace_file"])
        assert replay["config_sha256"] == first["config_sha256"]
        pd.testing.assert_frame_equal(original.drop(columns="wall_time_s"), replayed.drop(columns="wall_time_s"))

    def test_divergence_keeps_partial_trace(self, tmp_path):
        document = with_updates(SYNTHETIC_DOC, forum={"K": 5, "T": 1, "mu": 1e308, "eta": 0.05})
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(DivergenceError):
            run_experiment(parse_experiment_config(json.dumps(document)), tmp_path)
        partial = sorted(tmp_path.glob("*__diverged.csv"))
        assert len(partial) == 1
        frame, provenance = read_trace_csv(partial[0])
        assert list(frame.columns) == trace_columns(2)
        assert frame["k"].iloc[0] == 0
        assert provenance["seed"] == "0"

    def test_hyperclean_summary_aggregates_seeds(self, tmp_path):
        document = {
            "name": "clean",
            "problem": {
                "kind": "hyperclean",
                "hyperclean": {"train_size": [24, 18], "val_size": 12, "test_size": 12, "feature_dim": 3},
            },
            "forum": {"K": 5, "T": 2, "mu": 0.05, "eta": 0.05},
            "seeds": [1, 2, 3],
            "repeat": 3,
        }
        summary = run_experiment(parse_experiment_config(json.dumps(document)), tmp_path)
        assert len(summary["runs"]) == 3
        assert all("hyperclean" in run for run in summary["runs"])
        aggregate = summary["aggregates"][0]
        assert aggregate["runs"] == 3
        assert set(aggregate["mean_test_accuracy"]) == {"mean", "std"}
        assert all(run["final"]["approximate_metrics"] for run in summary["runs"])


def test_aggregate_runs_mean_and_std():
    runs = [
        {
            "initialization": "zeros",
            "sweep": {},
            "final": {"q": q, "kkt_residual": None, "optimality_gap": None, "F_values": [1.0]},
            "total_wall_time_s": 0.1,
        }
        for q in (1.0, 3.0)
    ]
    (aggregate,) = aggregate_runs(runs)
    assert aggregate["final_q"] == {"mean": 2.0, "std": 1.0}
    assert "final_kkt_residual" not in aggregate


class TestCompare:
    def compare_document(self, methods, K=200):
        return {
            "name": "cmp",
            "problem": {"kind": "synthetic"},
            "initializations": [{"alpha": [0.0], "omega": [0.0, 3.0]}],
            "compare": {"methods": methods, "threshold": 1e-2},
            "forum": {"K": K, "T": 30, "mu": 0.3, "eta": 0.05, "rho": 0.3},
            "moml": {"K": K, "mu": 0.1},
        }

    def test_single_method_gives_one_row(self):
        config = parse_experiment_config(json.dumps(self.compare_document([{"method": "forum"}])))
        frame = compare_methods(expand_compare_configs(config))
        assert len(frame) == 1
        assert frame.loc[0, "method"] == "forum"

    def test_unreached_threshold_is_a_sentinel(self):
        config = parse_experiment_config(json.dumps(self.compare_document([{"method": "forum"}], K=2)))
        frame = compare_methods(expand_compare_configs(config), threshold=1e-12)
        assert frame.loc[0, "iterations_to_threshold"] == NOT_REACHED

    def test_forum_and_moml_side_by_side(self):
        methods = [{"method": "forum", "label": "forum"}, {"method": "moml_exact", "label": "moml"}]
        config = parse_experiment_config(json.dumps(self.compare_document(methods, K=50)))
        frame = compare_methods(expand_compare_configs(config))
        assert frame["label"].tolist() == ["forum", "moml"]
        assert frame["method"].tolist() == ["forum", "moml_exact"]
        assert frame.loc[1, "final_optimality_gap"] < 1e-2
        assert frame.loc[0, "final_q"] >= 0.0

    @pytest.mark.slow
    def test_both_methods_reach_the_pareto_set(self):
        methods = [{"method": "forum"}, {"method": "moml_exact"}]
        config = parse_experiment_config(json.dumps(self.compare_document(methods, K=2000)))
        frame = compare_methods(expand_compare_configs(config))
        assert (frame["final_optimality_gap"] < 1e-2).all()
        assert NOT_REACHED not in frame["iterations_to_threshold"].tolist()

    def test_mismatched_problems_are_rejected(self):
        config = parse_experiment_config(json.dumps(self.compare_document([{"method": "forum"}])))
        other = config.model_copy(update={"problem": config.problem.model_copy(update={"kind": "random_quadratic"})})
        with pytest.raises(ConfigurationError, match="problem"):
            compare_methods([config, other])


def test_benchmark_scaling_shape():
    report = benchmark_complexity(T_values=[1, 4, 16], p_values=[40], methods=["forum", "moml_unrolled"], n=3)
    assert len(report.rows) == 6
    assert all(row.timed_iterations >= 5 for row in report.rows)
    assert report.workspace_spread("forum", 40) < 0.05
    assert report.memory_slopes[("moml_unrolled", 40)] == pytest.approx(40.0)
    assert report.memory_slopes[("forum", 40)] == pytest.approx(0.0, abs=1e-9)
    assert set(report.frame().columns) >= {"method", "T", "p", "mean_time_s", "peak_workspace_floats"}


def test_benchmark_rejects_too_few_timed_iterations():
    with pytest.raises(ConfigurationError):
        benchmark_complexity(T_values=[1], p_values=[5], methods=["forum"], timed=3)


class TestSettings:
    def test_environment_overrides(self, monkeypatch):
        monkeypatch.setenv("FORUM_WORKERS", "3")
        monkeypatch.setenv("FORUM_OUT_DIR", "elsewhere")
        assert Settings().workers == 3
        reset_settings()
        try:
            assert get_settings().out_dir == "elsewhere"
        finally:
            reset_settings()


class TestCli:
    def test_run_succeeds(self, tmp_path):
        path = write_config(tmp_path, with_updates(SYNTHETIC_DOC, forum={**SYNTHETIC_DOC["forum"], "K": 5}))
        result = runner.invoke(app, ["run", str(path), "--out-dir", str(tmp_path / "out"), "--quiet"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "synthetic__summary.json").is_file()

    def test_config_error_exit_code(self, tmp_path):
        path = write_config(tmp_path, with_updates(SYNTHETIC_DOC, method="bome"))
        result = runner.invoke(app, ["run", str(path), "-o", str(tmp_path)])
        assert result.exit_code == 2

    def test_missing_file_is_a_config_error(self, tmp_path):
        result = runner.invoke(app, ["run", str(tmp_path / "absent.json")])
        assert result.exit_code == 2

    def test_capability_exit_code(self, tmp_path):
        document = {"problem": {"kind": "hyperclean"}, "method": "moml_exact", "moml": {"K": 5, "mu": 0.1}}
        result = runner.invoke(app, ["run", str(write_config(tmp_path, document)), "-o", str(tmp_path)])
        assert result.exit_code == 4

    def test_divergence_exit_code(self, tmp_path):
        document = with_updates(SYNTHETIC_DOC, forum={"K": 5, "T": 1, "mu": 1e308, "eta": 0.05})
        with np.errstate(over="ignore", invalid="ignore"):
            result = runner.invoke(app, ["run", str(write_config(tmp_path, document)), "-o", str(tmp_path)])
        assert result.exit_code == 3

    def test_validate_writes_report(self, tmp_path):
        path = write_config(tmp_path, SYNTHETIC_DOC)
        result = runner.invoke(app, ["validate", str(path), "-o", str(tmp_path), "-q"])
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "synthetic__validation.json").read_text())
        assert report["passed"]

    def test_compare_writes_table(self, tmp_path):
        document = {
            "name": "cmp",
            "problem": {"kind": "synthetic"},
            "initializations": "standard",
            "compare": {"methods": [{"method": "forum"}, {"method": "moml_exact"}]},
            "forum": {"K": 20, "T": 10, "mu": 0.3, "eta": 0.05},
            "moml": {"K": 20, "mu": 0.1},
        }
        result = runner.invoke(app, ["compare", str(write_config(tmp_path, document)), "-o", str(tmp_path), "-s", "3"])
        assert result.exit_code == 0, result.output
        table, provenance = read_trace_csv(tmp_path / "cmp__comparison.csv")
        assert len(table) == 2
        assert provenance["seed"] == "3"

    def test_bench_complexity_writes_slopes(self, tmp_path):
        document = {
            "name": "bench",
            "problem": {"kind": "random_quadratic"},
            "benchmark": {"T_values": [1, 2], "p_values": [10], "n": 2},
        }
        result = runner.invoke(app, ["bench-complexity", str(write_config(tmp_path, document)), "-o", str(tmp_path)])
        assert result.exit_code == 0, result.output
        slopes = json.loads((tmp_path / "bench__complexity_slopes.json").read_text())
        assert {entry["method"] for entry in slopes["slopes"]} == {"forum", "moml_unrolled"}
