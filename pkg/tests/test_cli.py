"""Command-line subcommands, exit codes and determinism."""

import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from statdse.cli import main
from statdse.errors import EXIT_CONFIGURATION, EXIT_DATA, EXIT_NOT_COVERED, EXIT_NUMERICAL, NotCoveredError
from statdse.evaluators import load_table_evaluator

FIXTURES = Path(__file__).parent / "fixtures"
TABLE8 = str(FIXTURES / "table8.csv")
TABLE8_MANIFEST = str(FIXTURES / "table8_manifest.json")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _cube_manifest(tmp_path, objectives=(("source", "maximize"), ("target", "maximize")), levels=6):
    doc = {
        "format": "statdse-manifest",
        "version": 1,
        "parameters": [{"name": f"x{i}", "levels": list(range(1, levels + 1))} for i in range(3)],
        "objectives": [{"name": n, "direction": d} for n, d in objectives],
    }
    path = tmp_path / "cube.json"
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def dse_run(tmp_path):
    out = tmp_path / "run"
    assert main(["dse", "--manifest", TABLE8_MANIFEST, "--dataset", TABLE8, "--budget", "8", "--n-init", "2",
                 "--candidates-per-model", "1", "--pool-size", "8", "--iterations", "50", "--patience", "50",
                 "--out", str(out)]) == 0
    return out


class TestDse:
    def test_fixture_best_equals_table_optimum(self, dse_run):
        summary = json.loads((dse_run / "summary.json").read_text())
        ev = load_table_evaluator(TABLE8, TABLE8_MANIFEST)
        best = {o["name"]: o["best_value"] for o in summary["objectives"]}
        assert best == {n: ev.optimum(n)[1] for n in ev.objective_names}
        assert summary["total_queries"] == 8

    def test_outputs_present(self, dse_run):
        names = sorted(p.name for p in dse_run.iterdir())
        assert names == ["evaluations.csv", "manifest.json", "model_latency.gp", "model_throughput.gp",
                         "run_history.csv", "summary.json"]
        with (dse_run / "run_history.csv").open() as f:
            header = next(csv.reader(f))
        assert header[:4] == ["iteration", "total_queries", "objective", "best_value"]

    def test_reruns_byte_identical(self, tmp_path):
        man = _cube_manifest(tmp_path)
        outs = []
        for i in range(2):
            out = tmp_path / f"r{i}"
            assert main(["dse", "--manifest", man, "--synthetic", "correlated_pair", "--budget", "30",
                         "--seed", "3", "--out", str(out)]) == 0
            outs.append(out)
        for name in ("summary.json", "run_history.csv", "evaluations.csv", "model_source.gp", "model_target.gp"):
            assert _digest(outs[0] / name) == _digest(outs[1] / name)

    def test_missing_manifest(self, tmp_path, capsys):
        out = tmp_path / "never"
        code = main(["dse", "--manifest", str(tmp_path / "nope.json"), "--dataset", TABLE8, "--out", str(out)])
        assert code == EXIT_CONFIGURATION
        assert not out.exists()
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("statdse: error[configuration]:")

    def test_unknown_objective(self, tmp_path):
        out = tmp_path / "x"
        assert main(["dse", "--manifest", TABLE8_MANIFEST, "--dataset", TABLE8, "--objectives", "power",
                     "--out", str(out)]) == EXIT_CONFIGURATION
        assert not out.exists()

    def test_both_sources(self, tmp_path):
        assert main(["dse", "--manifest", TABLE8_MANIFEST, "--dataset", TABLE8, "--synthetic", "bowl",
                     "--out", str(tmp_path / "x")]) == EXIT_CONFIGURATION

    def test_transfer_flag(self, tmp_path):
        man = _cube_manifest(tmp_path)
        src = tmp_path / "src"
        assert main(["dse", "--manifest", man, "--synthetic", "correlated_pair", "--objectives", "source",
                     "--budget", "40", "--out", str(src)]) == 0
        out = tmp_path / "tl"
        assert main(["dse", "--manifest", man, "--synthetic", "correlated_pair", "--objectives", "target",
                     "--transfer-from", f"target={src / 'model_source.gp'}", "--lambda1", "0.5",
                     "--budget", "20", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["transfer"] == {"lambda1": 0.5, "lambda2": 0.0}

    def test_malformed_table_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text(Path(TABLE8).read_text() + "1,2,1,0,0\n")
        assert main(["dse", "--manifest", TABLE8_MANIFEST, "--dataset", str(bad),
                     "--out", str(tmp_path / "x")]) == EXIT_DATA
        assert "error[data]" in capsys.readouterr().err


class TestBootstrap:
    def test_default_row_count(self, dse_run, tmp_path):
        out = tmp_path / "bs"
        # widen the grid so 2000 distinct points exist
        man = tmp_path / "wide.json"
        doc = json.loads(Path(TABLE8_MANIFEST).read_text())
        doc["parameters"] = [{"name": p["name"], "levels": list(range(p["levels"][0], p["levels"][1] + 1))}
                             for p in doc["parameters"]]
        man.write_text(json.dumps(doc))
        assert main(["bootstrap", "--model", str(dse_run / "model_latency.gp"), "--manifest", str(man),
                     "--out", str(out)]) == 0
        lines = (out / "simulated.csv").read_text().splitlines()
        assert lines[0] == "unroll,simd,compute_units,latency"
        assert len(lines) == 2001

    def _boot(self, dse_run, tmp_path, name, mode, seed):
        out = tmp_path / name
        assert main(["bootstrap", "--model", str(dse_run / "model_latency.gp"), "--manifest", TABLE8_MANIFEST,
                     "--n-points", "50", "--noise-mode", mode, "--seed", str(seed), "--out", str(out)]) == 0
        return _digest(out / "simulated.csv")

    def test_mean_only_identical(self, dse_run, tmp_path):
        assert self._boot(dse_run, tmp_path, "a", "mean", 1) == self._boot(dse_run, tmp_path, "b", "mean", 1)

    def test_joint_seed_changes_output(self, dse_run, tmp_path):
        assert self._boot(dse_run, tmp_path, "a", "joint", 1) != self._boot(dse_run, tmp_path, "b", "joint", 2)

    def test_joint_same_seed_identical(self, dse_run, tmp_path):
        assert self._boot(dse_run, tmp_path, "a", "joint", 4) == self._boot(dse_run, tmp_path, "b", "joint", 4)

    def test_missing_model(self, tmp_path):
        assert main(["bootstrap", "--model", str(tmp_path / "none.gp"), "--manifest", TABLE8_MANIFEST,
                     "--out", str(tmp_path / "x")]) == EXIT_CONFIGURATION


class TestRegress:
    def test_lasso_path_last_collapse_is_informative(self, tmp_path):
        out = tmp_path / "lasso"
        assert main(["regress", "--dataset", str(FIXTURES / "noise_features.csv"), "--model", "lasso",
                     "--out", str(out)]) == 0
        with (out / "lasso_path.csv").open() as f:
            rows = list(csv.reader(f))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        assert header[0] == "lambda"
        last_nonzero = [data[np.flatnonzero(data[:, j] != 0), 0].max(initial=-1) for j in range(1, len(header))]
        assert header[1 + int(np.argmax(last_nonzero))] == "informative"
        assert np.all(data[-1, 1:] == 0)
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["collapse_order"][-1] == "informative"
        assert {"model", "normalized_rmse", "n_samples", "data_source"} <= set(metrics)

    @pytest.mark.parametrize("model", ["linear", "lasso", "forest"])
    def test_reruns_byte_identical(self, tmp_path, model):
        digests = []
        for i in range(2):
            out = tmp_path / f"{model}{i}"
            assert main(["regress", "--dataset", str(FIXTURES / "noise_features.csv"), "--model", model,
                         "--seed", "2", "--data-source", "simulated", "--out", str(out)]) == 0
            digests.append(sorted((p.name, _digest(p)) for p in out.iterdir()))
        assert digests[0] == digests[1]

    def test_linear_coefficients(self, tmp_path):
        out = tmp_path / "lin"
        assert main(["regress", "--dataset", str(FIXTURES / "noise_features.csv"), "--model", "linear",
                     "--out", str(out)]) == 0
        rows = dict(r for r in csv.reader((out / "coefficients.csv").open()))
        assert float(rows["informative"]) == pytest.approx(0.5, abs=0.02)

    def test_held_out_file(self, tmp_path):
        out = tmp_path / "ho"
        assert main(["regress", "--dataset", str(FIXTURES / "noise_features.csv"), "--test-dataset",
                     str(FIXTURES / "noise_features.csv"), "--out", str(out)]) == 0
        assert json.loads((out / "metrics.json").read_text())["n_test"] == 200

    def test_collinear_is_numerical_error(self, tmp_path, capsys):
        data = tmp_path / "col.csv"
        data.write_text("a,b,y\n1,2,3\n2,4,5\n3,6,8\n4,8,9\n")
        assert main(["regress", "--dataset", str(data), "--test-dataset", str(data),
                     "--out", str(tmp_path / "x")]) == EXIT_NUMERICAL
        assert "error[numerical]" in capsys.readouterr().err


class TestPareto:
    def test_two_point_frontier(self, tmp_path):
        man = tmp_path / "m.json"
        man.write_text(json.dumps({
            "format": "statdse-manifest", "version": 1,
            "parameters": [{"name": "k", "levels": [0, 1]}],
            "objectives": [{"name": "a", "direction": "maximize"}, {"name": "b", "direction": "maximize"}],
        }))
        data = tmp_path / "d.csv"
        data.write_text("k,a,b\n0,1,1\n1,2,2\n")
        out = tmp_path / "p"
        assert main(["pareto", "--manifest", str(man), "--dataset", str(data), "--out", str(out)]) == 0
        assert (out / "frontier.csv").read_text().splitlines() == ["a,b,k,provenance", "2,2,1,evaluated"]

    def test_surrogate_frontier_labeled(self, dse_run, tmp_path):
        out = tmp_path / "s"
        assert main(["pareto", "--run", str(dse_run), "--surrogate", "--out", str(out)]) == 0
        rows = list(csv.reader((out / "frontier.csv").open()))
        assert all(r[-1] == "surrogate_predicted" for r in rows[1:])

    def test_single_objective_refused(self, tmp_path):
        assert main(["pareto", "--manifest", TABLE8_MANIFEST, "--dataset", TABLE8, "--objectives", "latency",
                     "--out", str(tmp_path / "x")]) == EXIT_CONFIGURATION


class TestReport:
    def test_objectives_once_in_summary_block(self, dse_run, capsys):
        assert main(["report", str(dse_run)]) == 0
        text = capsys.readouterr().out
        block = text.split("Summary\n-------\n", 1)[1].split("\n\n", 1)[0]
        for name in ("latency", "throughput"):
            assert block.count(name) == 1

    def test_not_a_run_directory(self, tmp_path):
        assert main(["report", str(tmp_path)]) == EXIT_CONFIGURATION


class TestGeneral:
    def test_inputs_not_mutated(self, dse_run, tmp_path):
        inputs = [Path(TABLE8), Path(TABLE8_MANIFEST), FIXTURES / "noise_features.csv"] + sorted(dse_run.iterdir())
        before = [_digest(p) for p in inputs]
        main(["regress", "--dataset", str(FIXTURES / "noise_features.csv"), "--out", str(tmp_path / "r")])
        main(["pareto", "--run", str(dse_run), "--out", str(tmp_path / "p")])
        main(["report", str(dse_run)])
        main(["bootstrap", "--model", str(dse_run / "model_latency.gp"), "--manifest", TABLE8_MANIFEST,
              "--n-points", "5", "--out", str(tmp_path / "b")])
        assert before == [_digest(p) for p in inputs]

    def test_exit_codes_distinct(self):
        codes = {EXIT_CONFIGURATION, EXIT_DATA, EXIT_NUMERICAL, EXIT_NOT_COVERED}
        assert len(codes) == 4 and 0 not in codes
        assert NotCoveredError("x").exit_code == EXIT_NOT_COVERED

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "statdse", "report", str(tmp_path)],
                              capture_output=True, text=True)
        assert proc.returncode == EXIT_CONFIGURATION
        assert proc.stderr.startswith("statdse: error[configuration]:")

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("dse", "bootstrap", "regress", "pareto", "report"):
            assert cmd in out
