"""CLI surface: exit codes, file handling, artifact schemas, round trips."""

import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from sconcave.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


class TestSample:
    def test_reproducible_output(self, runner, tmp_path):
        out = tmp_path / "x.txt"
        r1 = runner.invoke(main, ["sample", "--dist", "uniform", "--n", "5",
                                  "--seed", "7", "--out", str(out)])
        assert r1.exit_code == 0
        first = out.read_text()
        runner.invoke(main, ["sample", "--dist", "uniform", "--n", "5",
                             "--seed", "7", "--out", str(out)])
        assert out.read_text() == first
        vals = [float(v) for v in first.split()]
        assert len(vals) == 5 and all(0 <= v <= 1 for v in vals)

    def test_seed_required(self, runner):
        r = runner.invoke(main, ["sample", "--dist", "uniform", "--n", "5"])
        assert r.exit_code != 0

    def test_bad_beta(self, runner):
        r = runner.invoke(main, ["sample", "--dist", "pareto", "--beta", "0.5",
                                 "--n", "5", "--seed", "1"])
        assert r.exit_code == 1


class TestFit:
    def test_two_points(self, runner, tmp_path):
        data = tmp_path / "d.txt"
        data.write_text("0\n1\n")
        out = tmp_path / "fit.json"
        r = runner.invoke(main, ["fit", str(data), "--s", "0", "--out", str(out)])
        assert r.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["loglik"] == pytest.approx(0.0, abs=1e-8)
        vals = doc["phi_hat"]["values"]
        assert abs(vals[-1] - vals[0]) <= 1e-6

    def test_empty_file(self, runner, tmp_path):
        data = tmp_path / "d.txt"
        data.write_text("")
        r = runner.invoke(main, ["fit", str(data), "--s", "0"])
        assert r.exit_code == 1

    def test_bad_token_names_line(self, runner, tmp_path):
        data = tmp_path / "d.txt"
        data.write_text("0.5\nnot-a-number\n1.0\n")
        r = runner.invoke(main, ["fit", str(data), "--s", "0"])
        assert r.exit_code == 1
        assert ":2:" in r.output

    def test_below_threshold(self, runner, tmp_path):
        data = tmp_path / "d.txt"
        data.write_text("1.0\n2.0\n3.0\n")
        r = runner.invoke(main, ["fit", str(data), "--s", "-0.75"])
        assert r.exit_code == 1
        assert "4" in r.output  # the threshold is cited

    def test_sample_fit_round_trip(self, runner, tmp_path):
        data = tmp_path / "d.txt"
        out = tmp_path / "fit.json"
        r1 = runner.invoke(main, ["sample", "--dist", "laplace", "--n", "40",
                                  "--seed", "3", "--out", str(data)])
        assert r1.exit_code == 0
        r2 = runner.invoke(main, ["fit", str(data), "--s", "0", "--out", str(out)])
        assert r2.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["converged"] is True


class TestNonexistenceDemo:
    def test_verdict_yes(self, runner, tmp_path):
        out = tmp_path / "ne.json"
        r = runner.invoke(main, ["nonexistence-demo", "--s", "-2",
                                 "--out", str(out)])
        assert r.exit_code == 0
        assert "likelihood unbounded: yes" in r.output
        doc = json.loads(out.read_text())
        lls = [row["loglik"] for row in doc["table"]]
        assert all(b > a for a, b in zip(lls, lls[1:]))
        assert doc["tail_climb"] > 4.0

    def test_rejects_s_above_minus_one(self, runner):
        r = runner.invoke(main, ["nonexistence-demo", "--s", "-0.5"])
        assert r.exit_code == 1

    def test_shifts_nonpositive_data(self, runner, tmp_path):
        data = tmp_path / "d.txt"
        data.write_text("-1.0\n0.0\n2.0\n")
        out = tmp_path / "ne.json"
        r = runner.invoke(main, ["nonexistence-demo", "--s", "-2",
                                 "--data", str(data), "--out", str(out)])
        assert r.exit_code == 0
        assert json.loads(out.read_text())["shift_applied"] == 2.0


class TestRateStudy:
    def test_small_study_artifacts(self, runner, tmp_path):
        cfg = {"version": 1, "true_density": "laplace", "s": 0.0,
               "n_grid": [100, 200, 400], "replications": 3, "seed": 12,
               "metrics": ["hellinger"]}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        prefix = str(tmp_path / "study")
        r = runner.invoke(main, ["rate-study", str(cfg_path), "--out", prefix,
                                 "--format", "csv", "--format", "json",
                                 "--format", "svg"])
        assert r.exit_code == 0, r.output
        csv_text = (tmp_path / "study.csv").read_text().splitlines()
        assert csv_text[0] == "metric,n,replication,value"
        assert len(csv_text) == 1 + 3 * 3
        doc = json.loads((tmp_path / "study.json").read_text())
        assert "hellinger" in doc["slopes"]
        svg = (tmp_path / "study.svg").read_text()
        assert svg.startswith("<svg") and "circle" in svg

    def test_jobs_flag(self, runner, tmp_path):
        cfg = {"version": 1, "true_density": "laplace", "s": 0.0,
               "n_grid": [100, 200, 400], "replications": 2, "seed": 12,
               "metrics": ["hellinger"]}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        r = runner.invoke(main, ["rate-study", str(cfg_path), "--jobs", "2",
                                 "--out", str(tmp_path / "s2"), "--format", "json"])
        assert r.exit_code == 0, r.output
        doc = json.loads((tmp_path / "s2.json").read_text())
        assert doc["config"]["jobs"] == 2

    def test_zero_replications_rejected(self, runner, tmp_path):
        cfg = {"version": 1, "true_density": "laplace", "s": 0.0,
               "n_grid": [100], "replications": 0, "seed": 1}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        r = runner.invoke(main, ["rate-study", str(cfg_path)])
        assert r.exit_code == 1

    def test_unknown_keys_rejected(self, runner, tmp_path):
        cfg = {"version": 1, "true_density": "laplace", "s": 0.0,
               "n_grid": [100], "replications": 1, "seed": 1, "extra": True}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        r = runner.invoke(main, ["rate-study", str(cfg_path)])
        assert r.exit_code == 1


class TestEntropyStudy:
    def test_bounded_concave_study(self, runner, tmp_path):
        cfg = {"version": 1, "class": "bounded_concave",
               "params": {"b1": 0.0, "b2": 1.0, "B": 1.0},
               "eps_grid": [0.2, 0.1, 0.05, 0.025], "r": 1.0, "members": 40}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        prefix = str(tmp_path / "ent")
        r = runner.invoke(main, ["entropy-study", str(cfg_path), "--seed", "5",
                                 "--out", prefix])
        assert r.exit_code == 0, r.output
        rows = (tmp_path / "ent.csv").read_text().splitlines()
        assert rows[0] == "eps,count_log10,log_cardinality,max_size,covered_fraction"
        assert len(rows) == 5
        doc = json.loads((tmp_path / "ent.json").read_text())
        assert 0.4 <= doc["fitted_exponent"] <= 0.7
        assert all(row["covered_fraction"] == 1.0 for row in doc["rows"])


class TestEnvelopeCheck:
    def test_vacuous_below_two(self, runner, tmp_path):
        out = tmp_path / "env.json"
        r = runner.invoke(main, ["envelope-check", "--s", "-0.5", "--M", "1",
                                 "--seed", "2", "--out", str(out)])
        assert r.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["vacuous"] is True
        assert doc["L"] == pytest.approx(math.sqrt(2) - 1, abs=1e-12)

    def test_m5_members_dominated(self, runner, tmp_path):
        out = tmp_path / "env.json"
        r = runner.invoke(main, ["envelope-check", "--s", "-0.5", "--M", "5",
                                 "--members", "25", "--seed", "2",
                                 "--out", str(out)])
        assert r.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["all_dominated"] is True and doc["members_checked"] == 25
