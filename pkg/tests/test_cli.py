import json

import pytest

from mpcal.cli import EXIT_IO, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main
from mpcal.config import RunConfig


@pytest.fixture
def out(tmp_path):
    return tmp_path


class TestCommands:
    def test_simulate(self, out):
        assert main(["simulate", "--variant", "uniaxial", "--truth", "--out", str(out)]) == EXIT_OK
        assert len((out / "curve.csv").read_text().splitlines()) == 101

    def test_generate_then_calibrate(self, out, capsys):
        data = out / "d.csv"
        assert main(["generate", "--out", str(data), "--noise", "10", "--seed", "3"]) == EXIT_OK
        assert main(["calibrate", "--data", str(data), "--out", str(out / "cal")]) == EXIT_OK
        text = (out / "cal" / "summary.txt").read_text()
        assert "converged:              True" in text
        assert "total system solutions" in capsys.readouterr().out

    def test_calibrate_lbfgs(self, out):
        assert main(["calibrate", "--optimizer", "lbfgs", "--noise", "0", "--out", str(out)]) == EXIT_OK
        assert "lbfgs" in (out / "summary.txt").read_text()

    @pytest.mark.parametrize("cmd", ["check-grad", "check-hess", "check-complex"])
    def test_checks(self, cmd, out):
        assert main([cmd, "--out", str(out)]) == EXIT_OK
        assert list(out.glob("check_*.csv"))

    def test_ga_init(self, capsys):
        assert main(["ga-init", "--variant", "uniaxial"]) == EXIT_OK
        assert "initial guess" in capsys.readouterr().out

    def test_report(self, out):
        assert main(["report", "--variant", "3d", "--out", str(out)]) == EXIT_OK
        assert (out / "report.txt").exists()

    def test_truncate_strain(self, out, capsys):
        assert main(["report", "--variant", "uniaxial", "--truncate-strain", "0.01", "--out", str(out)]) == EXIT_OK

    def test_ensemble(self, out, capsys):
        assert main(["calibrate", "--seeds", "2", "--out", str(out)]) == EXIT_OK
        rows = (out / "ensemble.csv").read_text().splitlines()
        assert len(rows) == 3 and rows[1].startswith("0,")


class TestExitCodes:
    def test_usage(self):
        with pytest.raises(SystemExit) as exc:
            main(["calibrate", "--optimizer", "sgd"])
        assert exc.value.code == EXIT_USAGE

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["fit"])
        assert exc.value.code == EXIT_USAGE

    def test_negative_noise(self):
        assert main(["generate", "--noise", "-1"]) == EXIT_USAGE

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"schema_version": 1}))
        assert main(["simulate", "--config", str(cfg)]) == EXIT_USAGE

    def test_variant_conflict(self):
        assert main(["simulate", "--config", "plane_stress", "--variant", "3d"]) == EXIT_USAGE

    def test_missing_data(self, tmp_path):
        assert main(["calibrate", "--data", str(tmp_path / "none.csv")]) == EXIT_IO

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "none.json")]) == EXIT_IO

    def test_malformed_data(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("step,eps_11,eps_22,eps_12,sig_11,sig_22,sig_12\n1,x,0,0,0,0,0\n")
        assert main(["calibrate", "--data", str(p)]) == EXIT_IO

    def test_solver_failure(self, tmp_path):
        d = RunConfig.builtin("uniaxial_surrogate").to_dict()
        d["solver"] = {"tol": 1e-10, "max_iter": 1}
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(d))
        assert main(["simulate", "--config", str(cfg), "--truth"]) == EXIT_SOLVER

    def test_not_converged(self, tmp_path):
        d = RunConfig.builtin("plane_stress").to_dict()
        d["settings"]["max_iterations"] = 1
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(d))
        assert main(["calibrate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_SOLVER
