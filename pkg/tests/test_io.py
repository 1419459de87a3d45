import json

import numpy as np
import pytest

from mpcal.app import emit_report, generate_synthetic, load_or_generate, run_calibration
from mpcal.config import ConfigError, RunConfig, builtin_names
from mpcal.dataio import DataFileError, data_columns, load_observations, write_data
from mpcal.forward import LoadSchedule


def _plane_dict(**over):
    d = RunConfig.builtin("plane_stress").to_dict()
    d.update(over)
    return d


class TestConfig:
    def test_builtins_load(self):
        assert builtin_names() == ["plane_stress", "three_d", "uniaxial_surrogate"]
        for name in builtin_names():
            RunConfig.builtin(name).validate()

    def test_round_trip(self, tmp_path):
        cfg = RunConfig.builtin("uniaxial_surrogate")
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        again = RunConfig.load(path)
        assert again.to_dict() == cfg.to_dict()
        assert again.base_dir == tmp_path

    def test_defaults(self):
        cfg = RunConfig.builtin("plane_stress")
        ps = cfg.param_set()
        np.testing.assert_allclose(ps.ref[ps.active], [220, 220, 22])
        np.testing.assert_allclose(ps.lower[ps.active], [0.22, 0.22, 0.022])
        np.testing.assert_array_equal(cfg.mask_array(), [1, 1, 0, 1, 0, 0])

    @pytest.mark.parametrize("over,msg", [
        (dict(schema_version=2), "schema_version"),
        (dict(noise=-1.0), "noise"),
        (dict(seed=None), "seed"),
        (dict(optimizer="bfgs"), "optimizer"),
        (dict(schedule=[{"target": {"11": 0.02}, "steps": 0}]), "step counts"),
        (dict(schedule=[{"target": {"44": 0.02}, "steps": 3}]), "strain component"),
        (dict(bogus=1), "unknown key"),
        (dict(observation={"mask": ["99"]}), "mask"),
    ])
    def test_invalid(self, over, msg):
        with pytest.raises(ConfigError, match=msg):
            RunConfig.from_dict(_plane_dict(**over))

    def test_ga_needs_seed(self):
        d = RunConfig.builtin("uniaxial_surrogate").to_dict()
        d["seed"] = None
        d["ga"]["enabled"] = True
        with pytest.raises(ConfigError, match="seed"):
            RunConfig.from_dict(d)

    def test_missing_parameter(self):
        d = _plane_dict()
        del d["params"]["values"]["D"]
        with pytest.raises(ConfigError, match="missing parameter"):
            RunConfig.from_dict(d)

    def test_bad_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            RunConfig.load(tmp_path / "c.json")

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError):
            RunConfig.builtin("nope")

    def test_ga_box_follows_active(self):
        s = RunConfig.builtin("uniaxial_surrogate").opt_settings()
        np.testing.assert_allclose(s.ga.lower, [100, 1000, 100, 500])


class TestDataFiles:
    def test_columns(self):
        assert data_columns("plane") == ["step", "eps_11", "eps_22", "eps_12", "sig_11", "sig_22", "sig_12"]
        assert len(data_columns("3d")) == 13

    def test_round_trip(self, tmp_path):
        cfg = RunConfig.builtin("plane_stress")
        schedule, targets, _ = generate_synthetic(cfg)
        write_data(tmp_path / "d.csv", schedule, targets)
        s2, obs = load_observations(tmp_path / "d.csv", "plane")
        np.testing.assert_array_equal(s2.strains, schedule.strains)
        masked = targets * cfg.mask_array()
        np.testing.assert_array_equal(obs.targets, masked)

    def test_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            schedule, targets, _ = generate_synthetic(RunConfig.builtin("plane_stress"))
            write_data(tmp_path / f"{name}.csv", schedule, targets)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_noiseless_equals_model(self):
        cfg = RunConfig.builtin("plane_stress")
        _, targets, history = generate_synthetic(cfg, noise=0.0)
        np.testing.assert_array_equal(targets, history.stress)

    def test_noise_statistics(self):
        cfg = RunConfig.builtin("plane_stress")
        _, targets, history = generate_synthetic(cfg)
        resid = (targets - history.stress)[:, cfg.mask_array()]
        assert resid.size == 300
        assert 4.0 <= resid.std(ddof=1) <= 6.0
        assert not np.any((targets - history.stress)[:, ~cfg.mask_array()])

    def test_truncation(self, tmp_path):
        sched = LoadSchedule.from_prescribed("uniaxial", np.round(np.arange(1, 51) * 0.001, 12)[:, None])
        write_data(tmp_path / "d.csv", sched, np.ones((50, 6)))
        s, obs = load_observations(tmp_path / "d.csv", "uniaxial", truncate_strain=0.02)
        assert s.n_steps == 20 and len(obs) == 20
        assert np.all(s.strains[:, 0] <= 0.02)

    def _write(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        return p

    def test_missing_column(self, tmp_path):
        p = self._write(tmp_path, "step,eps_11\n1,0.1\n")
        with pytest.raises(DataFileError, match="sig_11"):
            load_observations(p, "uniaxial")

    def test_malformed_row_line_number(self, tmp_path):
        p = self._write(tmp_path, "step,eps_11,sig_11\n1,0.001,70\n2,abc,140\n")
        with pytest.raises(DataFileError, match=":3: non-numeric"):
            load_observations(p, "uniaxial")

    def test_field_count(self, tmp_path):
        p = self._write(tmp_path, "step,eps_11,sig_11\n1,0.001\n")
        with pytest.raises(DataFileError, match=":2: expected 3 fields"):
            load_observations(p, "uniaxial")

    def test_non_monotone_steps(self, tmp_path):
        p = self._write(tmp_path, "step,eps_11,sig_11\n1,0.001,70\n3,0.002,140\n")
        with pytest.raises(DataFileError, match="count up from 1"):
            load_observations(p, "uniaxial")

    def test_non_finite(self, tmp_path):
        p = self._write(tmp_path, "step,eps_11,sig_11\n1,0.001,nan\n")
        with pytest.raises(DataFileError, match="non-finite"):
            load_observations(p, "uniaxial")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFileError):
            load_observations(tmp_path / "none.csv", "uniaxial")


class TestCalibrationRun:
    def test_noiseless_plane_exact(self):
        cfg = RunConfig.builtin("plane_stress")
        cfg.noise = 0.0
        res = run_calibration(cfg)
        assert np.all(res.rel_errors <= 1e-8)

    def test_uniaxial_surrogate_recovery(self, uniaxial_runs):
        res = uniaxial_runs["newton"]
        np.testing.assert_allclose(res.params, [148.223, 3472.982, 177.961, 2589.541], rtol=1e-3)

    def test_report_files(self, tmp_path, plane_runs):
        res = plane_runs[5.0, "newton"]
        paths = emit_report(res, tmp_path)
        conv = paths["convergence"].read_text().splitlines()
        assert len(conv) == 1 + 7
        curve = paths["curve"].read_text().splitlines()
        assert len(curve) == 1 + 100
        text = paths["summary"].read_text()
        assert "total system solutions: " + str(res.solves) in text
        # relative errors are recomputed from the stored truth
        for k, v in enumerate(res.params):
            assert f"({100 * abs(v - res.truth[k]) / res.truth[k]:.3f}%)" in text

    def test_final_gradient_column(self, tmp_path):
        cfg = RunConfig.builtin("plane_stress")
        cfg.noise = 0.0
        paths = emit_report(run_calibration(cfg), tmp_path)
        last = paths["convergence"].read_text().splitlines()[-1].split(",")
        assert float(last[2]) < 1e-4

    def test_deterministic_outputs(self, tmp_path):
        cfg = RunConfig.builtin("plane_stress")
        for name in ("a", "b"):
            emit_report(run_calibration(cfg), tmp_path / name)
        for f in ("convergence.csv", "curve.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_ga_start(self):
        cfg = RunConfig.builtin("uniaxial_surrogate")
        cfg.ga = dict(cfg.ga, enabled=True)
        res = run_calibration(cfg)
        assert res.trace.converged and res.ga_solves > 0
        np.testing.assert_allclose(res.params, [148.223, 3472.982, 177.961, 2589.541], rtol=1e-3)

    def test_data_file_input(self, tmp_path):
        cfg = RunConfig.builtin("plane_stress")
        schedule, targets, _ = generate_synthetic(cfg)
        write_data(tmp_path / "d.csv", schedule, targets)
        s, obs = load_or_generate(cfg, tmp_path / "d.csv")
        assert s.n_steps == 100 and obs.norm == "frobenius"
