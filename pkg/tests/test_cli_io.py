import json
import subprocess
import sys

import numpy as np
import pytest

from weightedshap.amortized import BoundAudit
from weightedshap.attribution import Attribution
from weightedshap.cli import main
from weightedshap.datasets import make_blobs
from weightedshap.evaluation import EvalReport
from weightedshap.exact import hessian_report
from weightedshap.games import save_dataset_csv
from weightedshap.io import SCHEMA_VERSION, load_report, persist_report
from weightedshap.weights import build_scheme


@pytest.fixture
def blobs_csv(tmp_path):
    path = tmp_path / "blobs.csv"
    save_dataset_csv(make_blobs(n_train=10, n_val=15, seed=0), path)
    return path


class TestPersistence:
    @pytest.mark.parametrize("report", [
        Attribution(np.array([0.1, 1 / 3, -2e-17]), "exact-semivalue", 3, 2.0, 1.0, std_err=np.array([1.0, 2.0, 3.0])),
        EvalReport("inclusion-auc", np.linspace(0, 1, 7), np.sqrt(np.linspace(0, 1, 7)), 0.61, {"alpha": 16}),
        hessian_report(build_scheme(7, 1, 4)),
        BoundAudit(0.1, 0.5, 0.4, 2.0, 0.2, False, 3),
    ])
    def test_round_trip(self, tmp_path, report):
        path = tmp_path / "r.json"
        persist_report(report, path)
        assert json.loads(path.read_text())["schema_version"] == SCHEMA_VERSION
        back = load_report(path)
        assert type(back) is type(report)
        for key, value in report.to_dict().items():
            other = back.to_dict()[key]
            if isinstance(value, list):
                assert np.array_equal(np.asarray(value), np.asarray(other))
            else:
                assert value == other

    def test_float_precision_is_exact(self, tmp_path):
        y = np.random.default_rng(0).random(11)
        rep = EvalReport("noisy-label-detection", np.linspace(0, 1, 11), y, 0.5)
        persist_report(rep, tmp_path / "r.json")
        assert np.array_equal(load_report(tmp_path / "r.json").y, y)

    def test_missing_schema_version(self, tmp_path):
        path = tmp_path / "r.json"
        path.write_text('{"type": "attribution"}')
        with pytest.raises(ValueError):
            load_report(path)

    def test_unsupported_object(self, tmp_path):
        with pytest.raises(TypeError):
            persist_report(object(), tmp_path / "x.json")


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCli:
    def test_exact_worked_example(self, capsys):
        code, out, _ = run(["exact", "--game", "unanimity:1,2", "--n", "3", "--alpha", "2", "--beta", "1"], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["schema_version"] == 1
        np.testing.assert_allclose(doc["values"], [1 / 3, 1 / 3, 0], atol=1e-15)
        assert doc["config"]["alpha"] == 2.0 and doc["config"]["command"] == "exact"

    @pytest.mark.parametrize("method", ["wls", "extended"])
    def test_exact_constrained_methods(self, capsys, method):
        code, out, _ = run(["exact", "--game", "random:3", "--n", "6", "--method", method, "--constant", "1.5"], capsys)
        assert code == 0 and sum(json.loads(out)["values"]) == pytest.approx(1.5)

    def test_estimate_without_game_is_usage_error(self, tmp_path, capsys):
        out_path = tmp_path / "o.json"
        code, _, err = run(["estimate", "--method", "mc", "--out", str(out_path)], capsys)
        assert code == 1 and "needs --game or --data" in err and not out_path.exists()

    def test_estimate_on_dataset(self, blobs_csv, tmp_path, capsys):
        out_path = tmp_path / "o.json"
        code, _, _ = run(["estimate", "--method", "wls", "--data", str(blobs_csv), "--samples", "500",
                          "--out", str(out_path)], capsys)
        doc = json.loads(out_path.read_text())
        assert code == 0 and doc["n"] == 10 and doc["n_samples"] == 500

    @pytest.mark.parametrize("argv", [
        ["frobnicate"],
        [],
        ["exact", "--bogus"],
        ["exact", "--game", "additive", "--n", "3", "--alpha", "-1"],
        ["exact", "--game", "pyramid", "--n", "3"],
        ["eval-noisy-labels", "--data", "/nonexistent.csv"],
        ["weights-report"],
    ])
    def test_usage_errors_exit_one(self, capsys, argv):
        code, _, err = run(argv, capsys)
        assert code == 1 and err

    def test_runtime_error_exits_two(self, capsys):
        code, _, err = run(["exact", "--game", "additive", "--n", "30"], capsys)
        assert code == 2 and err.startswith("error:")

    def test_byte_identical_reruns(self, blobs_csv, tmp_path, capsys):
        outs = []
        path = tmp_path / "o.json"
        for _ in range(2):
            run(["estimate", "--method", "mc", "--data", str(blobs_csv), "--samples", "300", "--seed", "4",
                 "--out", str(path)], capsys)
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_config_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"alpha": 16, "beta": 1, "n": 5, "game": "additive"}))
        _, out, _ = run(["exact", "--config", str(cfg)], capsys)
        assert json.loads(out)["alpha"] == 16
        _, out, _ = run(["exact", "--config", str(cfg), "--alpha", "4"], capsys)
        assert json.loads(out)["alpha"] == 4.0

    def test_missing_config_file(self, capsys):
        code, _, _ = run(["exact", "--config", "/nonexistent.json"], capsys)
        assert code == 1

    def test_weights_report_csv(self, tmp_path, capsys):
        path = tmp_path / "w.csv"
        code, _, _ = run(["weights-report", "--n", "500", "--alpha", "16", "--beta", "1", "--out", str(path)], capsys)
        lines = path.read_text().splitlines()
        assert code == 0 and lines[0] == "k,w_tilde_prev,w_tilde,ratio" and len(lines) == 500
        sidecar = json.loads((tmp_path / "w.csv.config.json").read_text())
        assert sidecar["n"] == 500 and sidecar["alpha"] == 16.0

    def test_hessian_report_csv(self, tmp_path, capsys):
        path = tmp_path / "h.csv"
        code, _, _ = run(["hessian-report", "--n-min", "4", "--n-max", "6", "--all-pairs", "--out", str(path)], capsys)
        lines = path.read_text().splitlines()
        assert code == 0 and len(lines) == 1 + 8 * 3
        for line in lines[1:]:
            cells = [float(c) for c in line.split(",")]
            assert cells[5] > 0 and abs(cells[5] - cells[7]) <= 1e-10

    def test_audit_bound(self, capsys):
        code, out, _ = run(["audit-bound", "--n", "6", "--instances", "3", "--alpha", "1", "--beta", "4"], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["type"] == "bound_audit" and doc["violated"] is False

    def test_train_and_trace(self, blobs_csv, tmp_path, capsys):
        out_path, trace = tmp_path / "p.json", tmp_path / "t.csv"
        code, _, _ = run(["train", "--head", "attention", "--data", str(blobs_csv), "--steps", "15",
                          "--out", str(out_path), "--trace", str(trace)], capsys)
        doc = json.loads(out_path.read_text())
        assert code == 0 and doc["kind"] == "attention" and doc["config"]["head"] == "attention"
        assert len(trace.read_text().splitlines()) == 16

    def test_eval_commands(self, blobs_csv, capsys):
        code, out, _ = run(["eval-noisy-labels", "--data", str(blobs_csv), "--valuator", "exact", "--flip", "0.2"], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["type"] == "eval_report" and 0 <= doc["auc"] <= 1
        code, out, _ = run(["eval-inclusion", "--data", str(blobs_csv), "--steps", "200"], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["task"] == "inclusion-auc" and len(doc["x"]) == 3

    def test_console_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "weightedshap.cli", "exact", "--game", "additive", "--n", "2"],
                             capture_output=True, text=True)
        assert res.returncode == 0 and json.loads(res.stdout)["values"] == [1.0, 1.0]
