import json
import math
import subprocess
import sys

import numpy as np
import pytest

from descentkit.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_NUMERIC, EXIT_OK, main

QUAD_CONFIG = {
    "objective": {"type": "quadratic", "a": [[20, 7], [5, 5]], "b": [0, 0]},
    "optimizer": {"type": "sgd"},
    "schedule": {"type": "constant", "eta": 0.02},
    "x1": [-3, 3.5],
    "steps": 10,
}

MLP_CONFIG = {
    "objective": {"type": "synthetic_mlp", "num_classes": 2, "per_class": 40, "dim": 2},
    "optimizer": {"type": "adasmooth"},
    "schedule": {"type": "constant", "eta": 0.001},
    "epochs": 3,
    "batch_size": 16,
    "seed": 5,
}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


class TestRun:
    def test_quadratic_ten_rows(self, tmp_path):
        cfg = write(tmp_path, "c.json", QUAD_CONFIG)
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
        rows = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
        assert rows[0] == "t,loss,grad_norm,eta"
        assert len(rows) == 11
        assert float(rows[1].split(",")[1]) == 57.625
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["schema"] == 1
        assert summary["iterations"] == 10
        assert summary["diverged"] is False
        losses = [float(r.split(",")[1]) for r in rows[1:]]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    @pytest.mark.parametrize("config", [QUAD_CONFIG, MLP_CONFIG], ids=["quadratic", "mlp"])
    def test_byte_identical(self, tmp_path, config):
        cfg = write(tmp_path, "c.json", config)
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b")])
        for name in ("trajectory.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_flag_changes_mlp_run(self, tmp_path):
        cfg = write(tmp_path, "c.json", MLP_CONFIG)
        main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "6"])
        assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()
        assert json.loads((tmp_path / "b" / "summary.json").read_text())["seed"] == 6

    def test_momentum_rho_one_diverged(self, tmp_path):
        cfg = dict(QUAD_CONFIG, objective={"type": "quadratic", "a": [[4, 0], [0, 40]], "b": [0, 0]},
                   optimizer={"type": "momentum", "rho": 1.0}, schedule={"type": "constant", "eta": 0.04},
                   x1=[1, 1], steps=200)
        path = write(tmp_path, "c.json", cfg)
        assert main(["run", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_DIVERGED
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["diverged"] is True
        assert summary["predicted_diverged"] is True

    def test_sgd_overflow_diverged(self, tmp_path):
        cfg = dict(QUAD_CONFIG, objective={"type": "quadratic", "a": [[4, 0], [0, 40]], "b": [0, 0]},
                   schedule={"type": "constant", "eta": 0.06}, x1=[1, 1], steps=500)
        path = write(tmp_path, "c.json", cfg)
        assert main(["run", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_DIVERGED
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["trajectory_diverged"] is True
        assert summary["iterations"] < 500

    def test_record_x(self, tmp_path):
        cfg = write(tmp_path, "c.json", QUAD_CONFIG)
        main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--record-x"])
        header = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,loss,grad_norm,eta,x0,x1"

    def test_mlp_summary(self, tmp_path):
        cfg = write(tmp_path, "c.json", MLP_CONFIG)
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert 0 <= summary["final_accuracy"] <= 1
        assert summary["iterations"] == 3 * 5

    def test_jobs_fan_out(self, tmp_path):
        a = write(tmp_path, "a.json", QUAD_CONFIG)
        b = write(tmp_path, "b.json", dict(QUAD_CONFIG, schedule={"type": "constant", "eta": 0.08}))
        assert main(["run", "--config", a, "--config", b, "--jobs", "2", "--out", str(tmp_path / "par")]) == 0
        assert main(["run", "--config", a, "--config", b, "--out", str(tmp_path / "seq")]) == 0
        for stem in ("a", "b"):
            for name in ("trajectory.csv", "summary.json"):
                assert (tmp_path / "par" / stem / name).read_bytes() == (tmp_path / "seq" / stem / name).read_bytes()

    @pytest.mark.parametrize("mutate", [
        lambda c: dict(c, bogus=1),
        lambda c: dict(c, optimizer={"type": "sgd", "lr": 0.1}),
        lambda c: dict(c, schedule={"type": "warp"}),
        lambda c: {k: v for k, v in c.items() if k != "steps"},
        lambda c: dict(c, x1=[1, 2, 3]),
        lambda c: dict(c, steps=-1),
        lambda c: dict(c, objective={"type": "quadratic", "a": [[1, 2]], "b": [0]}),
    ])
    def test_config_errors(self, tmp_path, capsys, mutate):
        cfg = write(tmp_path, "c.json", mutate(QUAD_CONFIG))
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_malformed_json_location(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.json", '{\n  "steps": 10,\n  "x1": [1,\n}')
        assert main(["run", "--config", cfg]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "c.json:4:1" in err

    def test_missing_config(self, capsys):
        assert main(["run"]) == EXIT_CONFIG

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == EXIT_CONFIG


class TestSchedule:
    def test_triangular_periodic(self, capsys):
        assert main(["schedule", "--spec", '{"type":"triangular","eta0":0.001,"eta_max":0.006,"s":5}',
                     "--t-max", "40"]) == EXIT_OK
        rows = capsys.readouterr().out.splitlines()
        assert rows[0] == "t,eta"
        eta = [float(r.split(",")[1]) for r in rows[1:]]
        assert len(eta) == 41
        assert all(eta[t] == eta[t + 10] for t in range(31))

    def test_noam_peak(self, capsys):
        main(["schedule", "--spec", '{"type":"noam","d_model":64,"w":30}', "--t-max", "100"])
        eta = [float(r.split(",")[1]) for r in capsys.readouterr().out.splitlines()[1:]]
        assert int(np.argmax(eta)) == 30

    def test_annealing_defaults(self, capsys):
        main(["schedule", "--spec", '{"type":"annealing_poly"}', "--t-max", "100"])
        eta = [float(r.split(",")[1]) for r in capsys.readouterr().out.splitlines()[1:]]
        assert eta[0] == 0.001
        assert eta[-1] == 1e-10

    def test_to_file(self, tmp_path):
        spec = write(tmp_path, "s.json", {"type": "constant", "eta": 0.5})
        assert main(["schedule", "--spec", spec, "--t-max", "3", "--out", str(tmp_path / "s.csv")]) == 0
        assert (tmp_path / "s.csv").read_text() == "t,eta\n0,0.5\n1,0.5\n2,0.5\n3,0.5\n"

    def test_bad_spec(self, capsys):
        assert main(["schedule", "--spec", '{"type":"constant"}', "--t-max", "3"]) == EXIT_CONFIG
        assert main(["schedule", "--spec", '{"type":"constant","eta":1}']) == EXIT_CONFIG


class TestRangeTest:
    CFG = {"objective": {"type": "quadratic", "a": [[4, 0], [0, 40]], "b": [0, 0]}, "x1": [1, 1], "steps": 500}

    def test_quadratic_threshold(self, tmp_path, capsys):
        cfg = write(tmp_path, "r.json", self.CFG)
        assert main(["range-test", "--config", cfg, "--grid", "0.001", "0.1", "11"]) == EXIT_OK
        rows = [r.split(",") for r in capsys.readouterr().out.splitlines()[1:]]
        assert len(rows) == 11
        for rate, loss in rows:
            if float(rate) < 0.05:
                assert loss != "diverged" and math.isfinite(float(loss))
            else:
                assert loss == "diverged"

    def test_single_point(self, tmp_path, capsys):
        cfg = write(tmp_path, "r.json", self.CFG)
        assert main(["range-test", "--config", cfg, "--rates", "0.01"]) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "rate,final_loss"
        assert len(out) == 2

    def test_mlp_u_shape(self, tmp_path, capsys):
        cfg = write(tmp_path, "r.json", {
            "objective": {"type": "synthetic_mlp", "num_classes": 2, "per_class": 50, "dim": 2},
            "optimizer": {"type": "sgd"}, "epochs": 5, "batch_size": 20, "seed": 0})
        assert main(["range-test", "--config", cfg, "--rates", "1e-5,1e-3,0.1,1,1e3"]) == EXIT_OK
        rows = [r.split(",") for r in capsys.readouterr().out.splitlines()[1:]]
        losses = [math.inf if v == "diverged" else float(v) for _, v in rows]
        best = int(np.argmin(losses))
        assert 0 < best < len(losses) - 1

    def test_needs_grid(self, tmp_path):
        cfg = write(tmp_path, "r.json", self.CFG)
        assert main(["range-test", "--config", cfg]) == EXIT_CONFIG


class TestSolve:
    def matrix(self, tmp_path, rows):
        text = f"{len(rows)}\n" + "\n".join(" ".join(str(v) for v in r) for r in rows) + "\n"
        return write(tmp_path, "m.txt", text)

    @pytest.mark.parametrize("rows, method, iters", [
        ([[20, 5], [5, 5]], "cg", 2),
        ([[20, 5], [5, 5]], "pcg-perfect", 1),
        ([[1, 0, 0], [0, 1, 0], [0, 0, 1]], "cg", 1),
        ([[20, 5], [5, 5]], "newton", 1),
        ([[20, 5], [5, 5]], "pcg-diag", 2),
    ])
    def test_iterations(self, tmp_path, capsys, rows, method, iters):
        m = self.matrix(tmp_path, rows)
        assert main(["solve", "--matrix", m, "--method", method]) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["iterations"] == iters
        assert out["converged"] is True
        assert out["schema"] == 1
        np.testing.assert_allclose(np.array(rows, float) @ out["x"], np.ones(len(rows)), atol=1e-9)

    def test_rhs_file(self, tmp_path, capsys):
        m = self.matrix(tmp_path, [[20, 5], [5, 5]])
        rhs = write(tmp_path, "b.txt", "1 1\n")
        main(["solve", "--matrix", m, "--rhs", rhs])
        np.testing.assert_allclose(json.loads(capsys.readouterr().out)["x"], [0, 0.2], atol=1e-12)

    def test_indefinite(self, tmp_path, capsys):
        m = self.matrix(tmp_path, [[1, 0], [0, -1]])
        assert main(["solve", "--matrix", m]) == EXIT_NUMERIC
        assert "positive definite" in capsys.readouterr().err

    def test_bad_file(self, tmp_path):
        m = write(tmp_path, "m.txt", "2\n1 2\n")
        assert main(["solve", "--matrix", m]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "c.json", QUAD_CONFIG)
    proc = subprocess.run([sys.executable, "-m", "descentkit", "run", "--config", cfg, "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "o" / "summary.json").exists()
