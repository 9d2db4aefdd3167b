import io
import json
import os

import numpy as np
import pytest

from bregcd.cli import main
from bregcd.experiment import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    parse_config,
    parse_seeds,
    read_trace_csv,
    run_experiment,
    write_trace_csv,
)
from bregcd.problems import load_instance, synth_instance
from bregcd.solvers import SolverConfig, run_rbcd


def run_cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


class TestConfig:
    def test_figure_one_flags(self):
        cfg = parse_config({"problem": "poisson", "solvers": "rbcd,arbcd", "m": 500, "n": 500,
                            "epochs": 100, "gammas": "2", "seeds": "1..10"})
        assert cfg.solvers == ["rbcd", "arbcd"] and cfg.m == cfg.n == 500
        assert cfg.seeds == list(range(1, 11)) and cfg.gammas == [2.0] and cfg.epochs == 100

    def test_empty_solver_list(self):
        with pytest.raises(ConfigError) as exc:
            parse_config({"solvers": ""})
        assert exc.value.key == "solvers"

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"epochs": 50, "solver": "bpg", "M": 30}))
        cfg = parse_config({"epochs": 100}, path)
        assert cfg.epochs == 100 and cfg.solvers == ["bpg"] and cfg.m == 30

    def test_unknown_and_malformed_keys(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config({"stepsize": 1})
        assert exc.value.key == "stepsize"
        with pytest.raises(ConfigError) as exc:
            parse_config({"epochs": "many"})
        assert exc.value.key == "epochs"
        path = tmp_path / "cfg.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            parse_config({}, path)

    def test_seed_ranges(self):
        assert parse_seeds("1..3,9") == [1, 2, 3, 9]
        assert parse_seeds(4) == [4]
        with pytest.raises(ValueError):
            parse_seeds("5..1")

    def test_output_dir_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("BREGCD_OUTPUT_DIR", str(tmp_path / "envout"))
        assert parse_config({}).output_dir == str(tmp_path / "envout")


class TestTraceFiles:
    def test_row_count_and_round_trip(self, tmp_path):
        tr = run_rbcd(synth_instance("poisson", 20, 20, 0), SolverConfig(epochs=100))
        path = tmp_path / "t.csv"
        write_trace_csv(tr, path)
        text = path.read_text()
        assert text.endswith("\n") and len(text.splitlines()) == 101
        assert text.splitlines()[0] == ",".join(CSV_HEADER)
        back = read_trace_csv(path)
        assert back.records == tr.records
        obj = [r.objective for r in back.records]
        assert all(b <= a for a, b in zip(obj, obj[1:]))

    def test_unwritable_path(self, tmp_path):
        tr = run_rbcd(synth_instance("poisson", 5, 5, 0), SolverConfig(epochs=1))
        with pytest.raises(OSError, match="missing"):
            write_trace_csv(tr, tmp_path / "missing" / "t.csv")


class TestExperiment:
    def test_single_run_single_file(self, tmp_path):
        cfg = ExperimentConfig(problem="poisson", m=10, n=10, seeds=[1], solvers=["rbcd"],
                               epochs=3, output_dir=str(tmp_path), figures=False)
        results, summary = run_experiment(cfg)
        csvs = sorted(f for f in os.listdir(tmp_path) if f.endswith(".csv") and f != "summary.csv")
        assert csvs == ["poisson_rbcd_s1.csv"] and len(results) == 1
        assert summary[0]["runs"] == 1 and summary[0]["diverged"] == 0

    def test_gamma_sweep_protocol(self, tmp_path):
        cfg = ExperimentConfig(problem="poisson", m=20, n=20, seeds=[1], solvers=["arbcd", "abpg"],
                               gammas=[0.1, 1.0, 2.0], epochs=3, output_dir=str(tmp_path), figures=False)
        run_experiment(cfg)
        csvs = [f for f in os.listdir(tmp_path) if f.endswith(".csv") and f != "summary.csv"]
        assert len(csvs) == 6
        assert "poisson_arbcd_g0.1_s1.csv" in csvs and "poisson_abpg_g2_s1.csv" in csvs
        assert os.path.exists(tmp_path / "summary.csv") and os.path.exists(tmp_path / "config.json")

    def test_divergence_is_recorded_and_isolated(self, tmp_path):
        cfg = ExperimentConfig(problem="relent", m=60, n=60, seeds=[1], solvers=["rbcd", "arbcd"],
                               gammas=[0.1], epochs=20, output_dir=str(tmp_path), figures=False)
        results, summary = run_experiment(cfg)
        rows = {r["solver"]: r for r in summary}
        assert rows["arbcd"]["diverged"] == 1 and rows["rbcd"]["diverged"] == 0
        alone = ExperimentConfig(problem="relent", m=60, n=60, seeds=[1], solvers=["rbcd"], epochs=20,
                                 output_dir=str(tmp_path / "alone"), figures=False, timing=False)
        run_experiment(alone)
        write_trace_csv(results[0].trace, tmp_path / "cmp.csv", timing=False)
        assert (tmp_path / "cmp.csv").read_bytes() == (tmp_path / "alone" / "relent_rbcd_s1.csv").read_bytes()


class TestCommandLine:
    def test_run_echoes_config_and_is_deterministic(self, tmp_path):
        outs = []
        for d in ("a", "b"):
            code, text = run_cli("run", "--problem", "poisson", "--solver", "rbcd,arbcd", "--m", "15", "--n", "15",
                                 "--epochs", "4", "--seed", "1..2", "--no-timing", "--no-figures",
                                 "--output-dir", str(tmp_path / d), "--quiet")
            assert code == 0 and "config: problem=poisson" in text
            outs.append(tmp_path / d)
        names = sorted(os.listdir(outs[0]))
        assert names == sorted(os.listdir(outs[1]))
        for name in names:
            if name.endswith(".csv"):
                assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_figures_and_plot_command(self, tmp_path):
        code, text = run_cli("run", "--problem", "poisson", "--solver", "rbcd,bpg", "--m", "10", "--n", "10",
                             "--epochs", "3", "--seed", "1", "--output-dir", str(tmp_path), "--quiet")
        assert code == 0
        assert (tmp_path / "poisson_objective.png").exists() and (tmp_path / "poisson_stationarity.png").exists()
        os.remove(tmp_path / "poisson_objective.png")
        code, text = run_cli("plot", str(tmp_path))
        assert code == 0 and (tmp_path / "poisson_objective.png").exists()

    def test_no_figures(self, tmp_path):
        code, _ = run_cli("run", "--solver", "rbcd", "--m", "5", "--n", "5", "--epochs", "2", "--seed", "1",
                          "--output-dir", str(tmp_path), "--no-figures", "--quiet")
        assert code == 0 and not any(f.endswith(".png") for f in os.listdir(tmp_path))

    def test_gen_and_instance_file(self, tmp_path):
        inst = tmp_path / "inst.txt"
        assert run_cli("gen", "--problem", "relent", "--m", "6", "--n", "4", "--seed", "3", "--out", str(inst))[0] == 0
        A, b = load_instance(inst)
        np.testing.assert_array_equal(A, synth_instance("relent", 6, 4, 3).A)
        code, _ = run_cli("run", "--problem", "relent", "--instance", str(inst), "--solver", "rbcd", "--epochs", "2",
                          "--seed", "1", "--output-dir", str(tmp_path / "o"), "--no-figures", "--quiet")
        assert code == 0

    def test_check_writes_report(self, tmp_path):
        code, text = run_cli("check", "gti", "--ref", "shannon", "--gamma", "1", "--output-dir", str(tmp_path))
        assert code == 0 and "OK" in text
        assert (tmp_path / "check_gti.txt").exists()
        assert json.loads((tmp_path / "check_gti.json").read_text())[0]["status"] == "pass"

    def test_check_failure_exit_code(self, tmp_path):
        code, _ = run_cli("check", "gti", "--ref", "burg", "--gamma", "0.6", "--output-dir", str(tmp_path))
        assert code == 2

    def test_usage_errors(self, tmp_path):
        assert run_cli("check", "nope")[0] == 1
        assert run_cli("run", "--solver", "", "--output-dir", str(tmp_path))[0] == 1
        assert run_cli("run", "--problem", "lasso", "--output-dir", str(tmp_path))[0] == 1
        assert run_cli()[0] == 1
        assert run_cli("check", "prox", "--ref", "burg", "--output-dir", str(tmp_path))[0] == 1

    def test_io_errors(self, tmp_path):
        assert run_cli("plot", str(tmp_path / "absent"))[0] == 3
        assert run_cli("run", "--instance", str(tmp_path / "absent.txt"), "--output-dir", str(tmp_path),
                       "--no-figures", "--quiet")[0] == 3
