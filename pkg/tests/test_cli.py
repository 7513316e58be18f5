import json
import math

import numpy as np
import pytest

from twistlab.cli import main


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_rows(text):
    lines = [ln for ln in text.strip().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def stable_bytes(text):
    return "\n".join(ln for ln in text.splitlines() if not ln.startswith("#"))


class TestQfiCommand:
    def test_closed_matches_numeric(self, capsys):
        code, out, _ = run_cli(["qfi", "--n", "20", "--t", "0.4", "--direction", "y"], capsys)
        assert code == 0
        header, rows = csv_rows(out)
        assert header == ["N", "t", "xi", "theta", "qfi_closed", "qfi_numeric", "rel_diff"]
        assert float(rows[0]["rel_diff"]) < 1e-9

    def test_bad_n_is_config_error(self, capsys):
        code, _, err = run_cli(["qfi", "--n", "0", "--t", "0.4"], capsys)
        assert code == 2
        assert "at least 1" in err


class TestMomCommand:
    def test_cat_protocol_value(self, capsys):
        code, out, _ = run_cli(["mom", "--n", "4", "--t", "1.5707963", "--variant",
                                "twist-untwist", "--rot", "x", "--readout", "x",
                                "--phi", "0.1"], capsys)
        assert code == 0
        header, rows = csv_rows(out)
        assert header == ["N", "t", "phi", "n_x", "n_y", "n_z", "m_x", "m_y", "m_z",
                          "reciprocal_error", "qfi", "flag"]
        assert float(rows[0]["reciprocal_error"]) == pytest.approx(16.0, rel=1e-5)
        assert rows[0]["flag"] == "ok"

    def test_indeterminate_point_flagged_not_fatal(self, capsys):
        phi = 2 * math.pi / 4
        code, out, _ = run_cli(["mom", "--n", "4", "--t", str(math.pi / 2), "--rot", "x",
                                "--readout", "x", "--phi", str(phi)], capsys)
        assert code == 0
        _, rows = csv_rows(out)
        assert rows[0]["flag"] == "indeterminate"
        assert rows[0]["reciprocal_error"] == ""

    def test_axis_parsing(self, capsys):
        code, out, _ = run_cli(["mom", "--n", "6", "--t", "0.3", "--phi", "0.2",
                                "--rot", "1.0472,0.5", "--readout", "y"], capsys)
        assert code == 0
        _, rows = csv_rows(out)
        assert float(rows[0]["n_z"]) == pytest.approx(0.5, abs=1e-4)

    def test_bad_axis_is_config_error(self, capsys):
        code, _, err = run_cli(["mom", "--n", "6", "--t", "0.3", "--phi", "0.2",
                                "--rot", "sideways"], capsys)
        assert code == 2
        assert "axis" in err


class TestPhaseDiagram:
    def test_schema_and_endpoint(self, capsys):
        code, out, _ = run_cli(["phase-diagram", "--n", "24", "--q-points", "12"], capsys)
        assert code == 0
        header, rows = csv_rows(out)
        assert header == ["N", "q", "t", "qfi_max", "xi_opt", "theta_opt", "regime"]
        assert len(rows) == 12
        last = rows[-1]
        assert float(last["t"]) == pytest.approx(math.pi / 2, abs=1e-12)
        assert float(last["qfi_max"]) == pytest.approx(24.0**2, rel=1e-9)

    def test_threads_do_not_change_output(self, capsys, monkeypatch):
        code, out1, _ = run_cli(["phase-diagram", "--n", "16", "--q-points", "8",
                                 "--threads", "1"], capsys)
        assert code == 0
        code, out2, _ = run_cli(["phase-diagram", "--n", "16", "--q-points", "8",
                                 "--threads", "3"], capsys)
        assert code == 0
        assert stable_bytes(out1) == stable_bytes(out2)

    def test_env_var_threads(self, capsys, monkeypatch):
        monkeypatch.setenv("TWISTLAB_THREADS", "2")
        code, out, _ = run_cli(["phase-diagram", "--n", "16", "--q-points", "6"], capsys)
        assert code == 0
        assert len(csv_rows(out)[1]) == 6

    def test_full_diagram_n100(self, capsys):
        code, out, _ = run_cli(["phase-diagram", "--n", "100"], capsys)
        assert code == 0
        _, rows = csv_rows(out)
        assert len(rows) == 60
        assert float(rows[-1]["t"]) == pytest.approx(math.pi / 2, abs=1e-12)
        assert float(rows[-1]["qfi_max"]) == pytest.approx(10000.0, rel=1e-9)
        sql_rows = [r for r in rows if abs(float(r["q"]) + 2.0) < 0.04]
        assert sql_rows and float(sql_rows[0]["qfi_max"]) == pytest.approx(100.0, rel=0.02)


class TestTwistUntwistScan:
    def test_schema_and_qcri_ordering(self, capsys):
        code, out, _ = run_cli(["twist-untwist-scan", "--n-min", "8", "--n-max", "12",
                                "--n-step", "4", "--exponent", "-0.5", "--rot", "y"], capsys)
        assert code == 0
        header, rows = csv_rows(out)
        assert header == ["N", "t", "phi", "rot", "qfi_max", "mom_opt", "mom_fixed_rot",
                          "mom_fixed_x", "mom_at_zero", "flag"]
        assert [r["N"] for r in rows] == ["8", "12"]
        for row in rows:
            qfi = float(row["qfi_max"])
            for col in ("mom_opt", "mom_fixed_rot", "mom_fixed_x"):
                if row[col]:
                    assert float(row[col]) <= qfi + 1e-6
            assert float(row["mom_opt"]) >= float(row["mom_fixed_rot"]) - 1e-9


class TestDeterminism:
    def test_byte_identical_reruns(self, capsys):
        args = ["fr-qfi", "--n", "16", "--k", "4", "--t-points", "9"]
        _, out1, _ = run_cli(args, capsys)
        _, out2, _ = run_cli(args, capsys)
        assert stable_bytes(out1) == stable_bytes(out2)
        assert out1.splitlines()[0].startswith("# generated")

    def test_json_fully_reproducible(self, capsys):
        args = ["qfi", "--n", "12", "--t", "0.7", "--format", "json"]
        _, out1, _ = run_cli(args, capsys)
        _, out2, _ = run_cli(args, capsys)
        assert out1 == out2
        payload = json.loads(out1)
        assert payload["meta"]["config"]["n"] == 12
        assert len(payload["records"]) == 1

    def test_seventeen_significant_digits(self, capsys):
        _, out, _ = run_cli(["qfi", "--n", "7", "--t", "0.3333333333333333"], capsys)
        _, rows = csv_rows(out)
        # %.17g: printed values round-trip to the exact binary float
        assert rows[0]["t"] == "0.33333333333333331"
        assert float(rows[0]["t"]) == 0.3333333333333333
        assert float(rows[0]["qfi_closed"]) == float(f"{float(rows[0]['qfi_closed']):.17g}")


class TestFrCommands:
    def test_fr_qfi_schema(self, capsys):
        code, out, _ = run_cli(["fr-qfi", "--n", "20", "--k", "5", "--t-points", "5"], capsys)
        assert code == 0
        header, rows = csv_rows(out)
        assert header == ["N", "K", "t", "branch", "var_max", "qfi", "qfi_db",
                          "overlay_inter", "overlay_largescale"]
        for row in rows:
            qfi = float(row["qfi"])
            assert float(row["var_max"]) == pytest.approx(qfi / 4, rel=1e-12)
            assert float(row["qfi_db"]) == pytest.approx(10 * math.log10(qfi / 22), rel=1e-9)

    def test_fr_variance_brute_column(self, capsys):
        code, out, _ = run_cli(["fr-variance", "--n", "6", "--k", "2", "--t", "0.6",
                                "--xi", "1.1", "--theta", "0.3", "--brute"], capsys)
        assert code == 0
        _, rows = csv_rows(out)
        assert float(rows[0]["rel_err"]) < 1e-9

    def test_k_out_of_range(self, capsys):
        code, _, err = run_cli(["fr-qfi", "--n", "10", "--k", "6"], capsys)
        assert code == 2
        assert "1 <= k <= n/2" in err

    def test_fr_optimize_small(self, capsys):
        code, out, _ = run_cli(["fr-optimize", "--n", "4", "--k", "1", "--t-points", "4",
                                "--maxiter", "60"], capsys)
        assert code == 0
        header, rows = csv_rows(out)
        assert header[:6] == ["N", "K", "t", "phi", "mom_opt", "qfi"]
        for row in rows:
            assert float(row["mom_opt"]) <= float(row["qfi"]) + 1e-6


class TestHusimi:
    def test_density_quadrature(self, capsys):
        code, out, _ = run_cli(["husimi", "--n", "6", "--t", "0.5", "--xi-points", "121",
                                "--theta-points", "241", "--density"], capsys)
        assert code == 0
        _, rows = csv_rows(out)
        xi = np.array([float(r["xi"]) for r in rows])
        q = np.array([float(r["q"]) for r in rows])
        dxi = math.pi / 120
        dth = 2 * math.pi / 240
        # trapezoid-ish Riemann sum; endpoint rows double-count theta = +-pi
        integral = np.sum(q * np.sin(xi)) * dxi * dth * (240 / 241) * (120 / 121)
        assert integral == pytest.approx(1.0, abs=0.05)


class TestVerify:
    def test_appendix_c_suite_passes(self, capsys):
        code, out, _ = run_cli(["verify", "--suite", "appendix-c", "--sites", "8"], capsys)
        assert code == 0
        _, rows = csv_rows(out)
        assert rows[0]["status"] == "pass"
        assert float(rows[0]["max_error"]) < 1e-9

    def test_ghz_suite(self, capsys):
        code, out, _ = run_cli(["verify", "--suite", "ghz"], capsys)
        assert code == 0
        _, rows = csv_rows(out)
        assert rows[0]["status"] == "pass"

    def test_bad_sites_config_error(self, capsys):
        code, _, _ = run_cli(["verify", "--suite", "appendix-c", "--sites", "7"], capsys)
        assert code == 2

    def test_numerical_failure_exits_three(self, capsys, monkeypatch):
        import twistlab.cli as cli

        def broken_suite(draws, seed):
            return {"suite": "closed-form", "check": "forced failure", "cases": 1,
                    "max_error": 1.0, "tolerance": 1e-9, "status": "fail"}

        monkeypatch.setattr(cli, "_suite_closed_form", broken_suite)
        code, _, err = run_cli(["verify", "--suite", "closed-form"], capsys)
        assert code == 3
        assert "verification failure" in err
