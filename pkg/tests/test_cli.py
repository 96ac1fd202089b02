import csv
import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from pricure.cli import main
from pricure.session import default_endpoints, topology_edges


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def fixture_dir(tmp_path, runner):
    out = tmp_path / "fx"
    result = runner.invoke(main, ["fixtures", "--out", str(out), "--owners", "3",
                                  "--classes", "3", "--per-class", "20", "--seed", "5"])
    assert result.exit_code == 0, result.output
    return out


class TestFixtures:
    def test_creates_manifest_and_models(self, fixture_dir):
        manifest = json.loads((fixture_dir / "manifest.json").read_text())
        assert manifest["owners"] == 3
        assert len(manifest["models"]) == 3
        for name in manifest["models"]:
            assert (fixture_dir / name).exists()
        assert (fixture_dir / "dataset.json").exists()


class TestSimulate:
    def test_basic_run_with_manifest(self, fixture_dir, runner, tmp_path):
        out = tmp_path / "run.json"
        result = runner.invoke(main, ["simulate", "--fixtures", str(fixture_dir),
                                      "--rounds", "4", "--epsilon", "1.0",
                                      "--seed", "2", "--manifest", str(out)])
        assert result.exit_code == 0, result.output
        assert "agreement=1.000" in result.output
        doc = json.loads(out.read_text())
        assert doc["labels"] == doc["reference_labels"]
        assert len(doc["labels"]) == 4
        assert doc["timings_ms"]["worker_round_mean"] > 0

    def test_budget_refusals_reported(self, fixture_dir, runner):
        result = runner.invoke(main, ["simulate", "--fixtures", str(fixture_dir),
                                      "--rounds", "3", "--epsilon", "0.5",
                                      "--budget-cap", "1.0"])
        assert result.exit_code == 0, result.output
        assert "refused=1" in result.output

    def test_missing_fixtures_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--fixtures", str(tmp_path / "nope")])
        assert result.exit_code == 2


class TestEval:
    def test_curve_csv(self, fixture_dir, runner, tmp_path):
        out = tmp_path / "curve.csv"
        result = runner.invoke(main, ["eval", "--fixtures", str(fixture_dir),
                                      "--epsilons", "0.01,1.0", "--trials", "2",
                                      "--samples", "20", "--out", str(out)])
        assert result.exit_code == 0, result.output
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["epsilon"] for r in rows] == ["0.01", "1.0"]
        assert float(rows[1]["accuracy"]) >= float(rows[0]["accuracy"])


class TestBench:
    def test_reports_timings(self, runner):
        result = runner.invoke(main, ["bench", "--preset", "mimic-small",
                                      "--rounds", "1"])
        assert result.exit_code == 0, result.output
        assert "worker round" in result.output


class TestPartyProcesses:
    def test_full_session_one_process_per_role(self, fixture_dir, tmp_path):
        endpoints = default_endpoints(3, base_port=39140)
        doc = {
            "config": {
                "modulus_q": 2**61 - 1, "scale": 100, "owners": 3,
                "network": {"input_dim": 8, "hidden_dims": [], "output_dim": 3},
                "privacy": {"epsilon": 1.0, "sensitivity": 1.0, "mode": "vote",
                            "clip": None},
                "budget_cap": None,
            },
            "endpoints": {r: list(hp) for r, hp in endpoints.items()},
            "rounds": 2,
            "seed": 13,
            "session": "itest",
            "fixtures": str(fixture_dir),
            "deadline": 30.0,
        }
        session_file = tmp_path / "session.json"
        session_file.write_text(json.dumps(doc))
        roles = sorted({r for e in topology_edges(3) for r in e})
        procs = {role: subprocess.Popen(
            [sys.executable, "-m", "pricure.cli", "party", "--role", role,
             "--session", str(session_file)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
            for role in roles}
        outputs = {}
        for role, proc in procs.items():
            out, err = proc.communicate(timeout=90)
            outputs[role] = (proc.returncode, out, err)
        for role, (code, out, err) in outputs.items():
            assert code == 0, f"{role}: {err}\n{out}"
        client = json.loads(outputs["client"][1])
        assert len(client["report"]["labels"]) == 2
        agg = json.loads(outputs["aggregator"][1])
        assert client["report"]["labels"] == agg["report"]["labels"]
