import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

import oracles
from igdiv import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestCompute:
    def test_euclidean_values(self, capsys):
        code, out, _ = run(capsys, "compute", "--manifold", "euclidean:2", "--p", "0,0", "--q", "1,0",
                           "--quantities", "D,r")
        assert code == 0
        out_rows = rows(out)
        assert list(out_rows[0]) == ["manifold", "p", "q", "quantity", "value", "est_error", "quad_order"]
        assert [float(r["value"]) for r in out_rows] == pytest.approx([0.5, 1.0], abs=1e-12)
        assert out_rows[0]["p"] == "0 0" and out_rows[1]["quad_order"] == "0"

    def test_sphere_example(self, capsys):
        code, out, _ = run(capsys, "compute", "--manifold", "sphere2", "--p", "1.5708,0",
                           "--q", "1.5708,0.5", "--quantities", "D")
        assert code == 0
        assert float(rows(out)[0]["value"]) == pytest.approx(0.125, abs=1e-6)

    def test_bernoulli_example(self, capsys):
        code, out, _ = run(capsys, "compute", "--manifold", "hessian:bernoulli", "--p", "0", "--q", "1",
                           "--quantities", "D,bregman")
        assert code == 0
        vals = [float(r["value"]) for r in rows(out)]
        assert vals == pytest.approx([0.110944] * 2, abs=1e-6)

    def test_full_precision_formatting(self, capsys):
        assert cli._fmt(0.1) == "0.10000000000000001"
        _, out, _ = run(capsys, "compute", "--manifold", "euclidean:2", "--p", "0.1,0", "--q", "0,0.3",
                        "--quantities", "D")
        value = rows(out)[0]["value"]
        assert value == cli._fmt(float(value))
        assert rows(out)[0]["p"] == "0.10000000000000001 0"

    def test_negative_coordinates_with_equals(self, capsys):
        code, out, _ = run(capsys, "compute", "--manifold", "hessian:gaussian_natural",
                           "--p=-0.2,-1", "--q=0.1,-0.9", "--quantities", "D")
        assert code == 0
        ref = oracles.gaussian_kl(np.array([0.1, -0.9]), np.array([-0.2, -1.0]))
        assert float(rows(out)[0]["value"]) == pytest.approx(ref, abs=1e-9)

    def test_json_output_file(self, capsys, tmp_path):
        target = tmp_path / "out.json"
        code, out, _ = run(capsys, "compute", "--manifold", "euclidean:2", "--p", "0,0", "--q", "1,1",
                           "--format", "json", "--out", str(target))
        assert code == 0 and out == ""
        data = json.loads(target.read_text())
        assert data[0]["quantity"] == "D" and data[0]["value"] == pytest.approx(1.0)


class TestExitCodes:
    @pytest.mark.parametrize("argv", [
        ["compute", "--manifold", "torus", "--p", "0", "--q", "1"],
        ["compute", "--manifold", "hessian:bernoulli", "--p", "0", "--q", "20"],
        ["compute", "--manifold", "euclidean:2", "--p", "0,0", "--q", "1,x"],
        ["compute", "--manifold", "euclidean:2", "--p", "0,0", "--q", "1,1", "--quantities", "kl"],
        ["compute", "--manifold", "sphere2", "--p", "1,0", "--q", "1.2,0", "--quantities", "bregman"],
        ["compute", "--manifold", "euclidean:2", "--p", "0,0", "--q", "1,1", "--quad-order", "3"],
        ["verify", "--manifold", "euclidean:2", "--suite", "nope"],
        ["table", "--manifold", "euclidean:2", "--p", "0,0", "--grid", "0:1:3"],
    ])
    def test_configuration_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 2
        assert "configuration error" in err

    def test_numerical_failure_names_quantity(self, capsys):
        code, _, err = run(capsys, "compute", "--manifold", "alpha_gaussian:0.5", "--p=-5,0.2",
                           "--q", "5,0.2", "--quantities", "D")
        assert code == 3
        assert "D:" in err and "shooting failed" in err

    def test_bad_thread_cap(self, capsys, monkeypatch):
        monkeypatch.setenv("IGDIV_THREADS", "zero")
        code, _, _ = run(capsys, "compute", "--manifold", "euclidean:2", "--p", "0,0", "--q", "1,1")
        assert code == 2
        monkeypatch.setenv("IGDIV_THREADS", "4")
        code, _, _ = run(capsys, "compute", "--manifold", "euclidean:2", "--p", "0,0", "--q", "1,1")
        assert code == 0


class TestSpecFiles:
    def test_manifold_spec(self, capsys, tmp_path):
        spec = tmp_path / "m.json"
        spec.write_text(json.dumps({"type": "alpha_gaussian", "alpha": 0.0}))
        code, out, _ = run(capsys, "compute", "--spec", str(spec), "--p", "0,1", "--q", "0,1.2",
                           "--quantities", "D,Dstar")
        assert code == 0
        a, b = (float(r["value"]) for r in rows(out))
        assert a == pytest.approx(b, abs=1e-10)

    def test_run_config(self, capsys, tmp_path):
        spec = tmp_path / "run.json"
        spec.write_text(json.dumps({"manifold": "euclidean:2", "numerics": {"quad_order": 8},
                                    "format": "json"}))
        code, out, _ = run(capsys, "compute", "--spec", str(spec), "--p", "0,0", "--q", "1,0")
        assert code == 0
        assert json.loads(out)[0]["quad_order"] == 8

    @pytest.mark.parametrize("content", [
        {"manifold": "euclidean:2", "colour": "red"},
        {"manifold": "euclidean:2", "numerics": {"ode_step": 10}},
        [1, 2],
    ])
    def test_unknown_keys_rejected(self, capsys, tmp_path, content):
        spec = tmp_path / "bad.json"
        spec.write_text(json.dumps(content))
        code, _, _ = run(capsys, "compute", "--spec", str(spec), "--p", "0,0", "--q", "1,0")
        assert code == 2


class TestTable:
    def test_paraboloid(self, capsys):
        code, out, _ = run(capsys, "table", "--manifold", "euclidean:2", "--p", "0,0",
                           "--grid=-1:1:3,0:1:2", "--quantities", "D")
        assert code == 0
        table = rows(out)
        assert list(table[0]) == ["q_1", "q_2", "value", "est_error"]
        q = np.array([[float(r["q_1"]), float(r["q_2"])] for r in table])
        np.testing.assert_array_equal(q, [[-1, 0], [-1, 1], [0, 0], [0, 1], [1, 0], [1, 1]])
        np.testing.assert_allclose([float(r["value"]) for r in table], 0.5 * np.sum(q ** 2, 1), atol=1e-12)

    def test_sphere_pseudo_distance_is_squared_distance(self, capsys):
        code, out, _ = run(capsys, "table", "--manifold", "sphere2", "--p", "1.5708,0",
                           "--grid", "1.3:1.8:3,-0.2:0.2:3", "--quantities", "r")
        assert code == 0
        for r in rows(out):
            d = oracles.great_circle([1.5708, 0.0], [float(r["q_1"]), float(r["q_2"])])
            assert float(r["value"]) == pytest.approx(d * d, abs=1e-6)

    def test_bernoulli_divergence_against_bregman(self, capsys):
        cols = []
        for name in ("D", "bregman"):
            code, out, _ = run(capsys, "table", "--manifold", "hessian:bernoulli", "--p", "0",
                               "--grid=-1:1:5", "--quantities", name)
            assert code == 0
            cols.append([float(r["value"]) for r in rows(out)])
        np.testing.assert_allclose(cols[0], cols[1], atol=1e-7)

    def test_failed_rows_are_nan_with_warning(self, capsys):
        code, out, err = run(capsys, "table", "--manifold", "alpha_gaussian:0.5", "--p", "0,0.3",
                             "--grid", "0.1:6:2,0.3:0.3:1", "--quantities", "D")
        assert code == 0
        values = [r["value"] for r in rows(out)]
        assert values[0] != "nan" and values[1] == "nan"
        assert "warning" in err


class TestVerify:
    def test_euclidean_all(self, capsys):
        code, out, err = run(capsys, "verify", "--manifold", "euclidean:2", "--suite", "all",
                             "--format", "json")
        assert code == 0
        reports = json.loads(out)
        assert all(r["passed"] and r["max_error"] < 1e-9 for r in reports)
        assert err.count("PASS") == len(reports)

    def test_sphere_subset(self, capsys):
        code, out, _ = run(capsys, "verify", "--manifold", "sphere2", "--suite", "grad_r,special_cases")
        assert code == 0
        assert [r["check"] for r in rows(out)] == ["grad_r", "special_cases"]

    def test_broken_step_fails(self, capsys):
        code, out, _ = run(capsys, "verify", "--manifold", "sphere2", "--suite", "grad_r",
                           "--fd-step", "10.0")
        assert code == 1
        assert rows(out)[0]["passed"] == "False"


class TestDescribe:
    def test_metadata(self, capsys):
        code, out, _ = run(capsys, "describe", "--manifold", "hessian:bernoulli", "--format", "json")
        assert code == 0
        info = json.loads(out)
        assert info["dim"] == 1 and info["category"] == "dually_flat"
        assert info["probed_convex_radius"] > 0.3
        assert "level_sets" not in info["checks"]


def test_console_entry_point_runs_as_module():
    proc = subprocess.run([sys.executable, "-m", "igdiv", "compute", "--manifold", "euclidean:2",
                           "--p", "0,0", "--q", "0,2", "--quantities", "standard"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    fields = proc.stdout.splitlines()[1].split(",")
    assert fields[3] == "standard" and float(fields[4]) == pytest.approx(4.0, abs=1e-12)
