import json
import re

import numpy as np
import pytest

from crtweight.cli import main

TOY = "cluster,z,y,x1\nA,1,1,0.5\nA,1,3,1.0\nB,0,0,-0.5\nB,0,2,0.2\n"


@pytest.fixture
def toy_csv(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text(TOY)
    return str(p)


def run(args):
    return main(args)


def read_report(path):
    doc = json.loads(open(path).read())
    return doc["header"], doc["report"]


def body_bytes(path):
    """The canonical report body, stripped of the non-canonical header."""
    text = open(path).read()
    return re.sub(r'^\{"header": \{.*?\}, "report": ', "", text, count=1)


class TestEstimate:
    def test_toy_no_fit_constant_e(self, toy_csv, tmp_path):
        out = tmp_path / "report.json"
        rc = run([
            "estimate", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.5",
            "--output", str(out),
        ])
        assert rc == 0
        header, report = read_report(out)
        assert header["command"] == "estimate"
        assert report["estimates"]["tau_R"] == pytest.approx(1.0)
        assert report["estimates"]["tau_c"] is None
        assert report["nu"]["value"] == 1.0
        assert report["propensity"] == {"mode": "constant", "value": 0.5}

    def test_repeat_runs_byte_identical_modulo_header(self, toy_csv, tmp_path):
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        args = [
            "estimate", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.6",
            "--boot", "25", "--seed", "11",
        ]
        assert run(args + ["--output", str(out1)]) == 0
        assert run(args + ["--output", str(out2)]) == 0
        assert body_bytes(out1) == body_bytes(out2)
        h1, h2 = read_report(out1)[0], read_report(out2)[0]
        assert h1["version"] == h2["version"]

    def test_fit_path_deterministic_and_reports_wps(self, tmp_path):
        # write a simulated recruited sample to CSV, estimate with the model
        # fit, and check byte-identical reports across runs
        from crtweight import ColumnSchema, generate, make_scenario, write_csv

        pop = generate(make_scenario("B-1-balanced", 30), 123)
        ds = pop.recruited_dataset()
        schema = ColumnSchema(covariates=tuple(f"x{i}" for i in range(5)))
        csv_path = tmp_path / "sim.csv"
        write_csv(ds, csv_path, schema)
        args = [
            "estimate", "--input", str(csv_path), "--pi-t", "0.5",
            "--covariate-cols", "x0,x1,x2,x3,x4",
        ]
        o1, o2 = tmp_path / "f1.json", tmp_path / "f2.json"
        assert run(args + ["--output", str(o1)]) == 0
        assert run(args + ["--output", str(o2)]) == 0
        assert body_bytes(o1) == body_bytes(o2)
        _, report = read_report(o1)
        assert report["wps_fit"]["converged"] is True
        assert len(report["wps_fit"]["alpha"]) == 6
        assert report["sandwich"]["se"]["tau_a"] > 0

    def test_single_arm_exit_code_and_no_partial_output(self, tmp_path, capsys):
        p = tmp_path / "one_arm.csv"
        p.write_text("cluster,z,y,x1\nA,1,1,0.5\nB,1,2,0.25\n")
        out = tmp_path / "never.json"
        rc = run([
            "estimate", "--input", str(p), "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.5",
            "--output", str(out),
        ])
        assert rc == 3
        assert not out.exists()
        assert "error" in capsys.readouterr().err

    def test_boot_requires_seed(self, toy_csv):
        rc = run([
            "estimate", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.5",
            "--boot", "10",
        ])
        assert rc == 2

    def test_missing_pi_t_is_usage_error(self, toy_csv):
        rc = run([
            "estimate", "--input", toy_csv, "--covariate-cols", "x1",
            "--no-fit", "--e-const", "0.5",
        ])
        assert rc == 2

    def test_csv_format(self, toy_csv, tmp_path, capsys):
        rc = run([
            "estimate", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.5",
            "--format", "csv", "--no-sandwich",
        ])
        assert rc == 0
        outp = capsys.readouterr().out
        assert outp.splitlines()[0] == "estimand,estimate,se,ci_lower,ci_upper"
        assert "tau_R,1," in outp

    def test_config_file_defaults(self, toy_csv, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"input={toy_csv}\npi-t=0.5\ncovariate-cols=x1\n# comment line\n"
        )
        rc = run([
            "estimate", "--config", str(cfg), "--no-fit", "--e-const", "0.5",
            "--format", "csv", "--no-sandwich",
        ])
        assert rc == 0
        assert "tau_R" in capsys.readouterr().out

    def test_flags_override_config(self, toy_csv, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"input={toy_csv}\npi-t=0.9\ncovariate-cols=x1\n")
        out = tmp_path / "r.json"
        rc = run([
            "estimate", "--config", str(cfg), "--pi-t", "0.5",
            "--no-fit", "--e-const", "0.5", "--output", str(out),
        ])
        assert rc == 0
        _, report = read_report(out)
        assert report["design"]["design_treatment_prob"] == 0.5


class TestSensitivityCmd:
    def test_gamma_one_rows_equal_point(self, toy_csv, capsys):
        rc = run([
            "sensitivity", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.6",
            "--gamma", "1", "--format", "csv",
        ])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        rows = [ln.split(",") for ln in lines[1:]]
        for row in rows:
            assert float(row[2]) == pytest.approx(float(row[3]), abs=1e-10)

    def test_widths_nondecreasing(self, toy_csv, tmp_path):
        out = tmp_path / "sens.json"
        rc = run([
            "sensitivity", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.6",
            "--gamma", "1,1.1,1.2,2", "--output", str(out),
        ])
        assert rc == 0
        _, report = read_report(out)
        by_estimand = {}
        for row in report["bounds"]:
            by_estimand.setdefault(row["estimand"], []).append(
                row["upper"] - row["lower"]
            )
        for widths in by_estimand.values():
            assert all(b >= a - 1e-12 for a, b in zip(widths, widths[1:]))

    def test_find_gamma_star_matches_library(self, toy_csv, tmp_path):
        out = tmp_path / "sens.json"
        rc = run([
            "sensitivity", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.6",
            "--find-gamma-star", "--output", str(out),
        ])
        assert rc == 0
        _, report = read_report(out)

        from crtweight import ColumnSchema, load_csv, minimal_gamma

        ds = load_csv(toy_csv, ColumnSchema(covariates=("x1",)), 0.5)
        expected = minimal_gamma(ds, e_values=np.full(4, 0.6), estimand="tau_a")
        got = report["gamma_star"]["tau_a"]["gamma_star"]
        assert got == pytest.approx(expected.gamma_star, abs=1e-9)

    def test_requires_gamma_or_star(self, toy_csv):
        rc = run([
            "sensitivity", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.6",
        ])
        assert rc == 2

    def test_bad_gamma_list(self, toy_csv):
        rc = run([
            "sensitivity", "--input", toy_csv, "--pi-t", "0.5",
            "--covariate-cols", "x1", "--no-fit", "--e-const", "0.6",
            "--gamma", "0.5,2",
        ])
        assert rc == 2


class TestSimulateCmd:
    def test_deterministic_summary_file(self, tmp_path):
        args = [
            "simulate", "--scenario", "B-1-balanced", "--clusters", "20",
            "--reps", "3", "--seed", "7", "--known-e", "--no-sandwich",
        ]
        o1, o2 = tmp_path / "s1.json", tmp_path / "s2.json"
        assert run(args + ["--output", str(o1)]) == 0
        assert run(args + ["--output", str(o2)]) == 0
        assert body_bytes(o1) == body_bytes(o2)

    def test_per_replicate_dump(self, tmp_path):
        out = tmp_path / "s.json"
        per = tmp_path / "reps.csv"
        rc = run([
            "simulate", "--scenario", "B-1-balanced", "--clusters", "20",
            "--reps", "2", "--seed", "3", "--known-e", "--no-sandwich",
            "--output", str(out), "--per-replicate", str(per),
        ])
        assert rc == 0
        lines = per.read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 replicates
        assert lines[0].startswith("replicate,failed,truth_tau_O")

    def test_unknown_scenario_exit_2(self):
        assert run([
            "simulate", "--scenario", "Q-1-balanced", "--clusters", "20",
            "--reps", "1", "--seed", "1",
        ]) == 2

    def test_zero_reps_exit_2(self):
        assert run([
            "simulate", "--scenario", "B-1-balanced", "--clusters", "20",
            "--reps", "0", "--seed", "1",
        ]) == 2


class TestReplicateCmd:
    def test_fast_criteria_pass(self, capsys, tmp_path):
        out = tmp_path / "acc.json"
        rc = run(["replicate", "--criteria", "8,9", "--output", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "criterion 8 [sensitivity solver exactness]: PASS" in text
        assert "criterion 9 [internal consistency oracles]: PASS" in text
        _, report = read_report(out)
        assert all(c["passed"] for c in report["criteria"])

    def test_injected_fault_fails_with_exit_6(self, capsys):
        rc = run([
            "replicate", "--criteria", "2", "--inject-coefficient-fault",
        ])
        assert rc == 6
        assert "FAIL" in capsys.readouterr().out

    def test_unknown_criterion_exit_2(self):
        assert run(["replicate", "--criteria", "42"]) == 2
