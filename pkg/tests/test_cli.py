import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest
import yaml

from dyadsim import io
from dyadsim.cli import (EXIT_ABORT, EXIT_IO, EXIT_OK, EXIT_USAGE, main, parse_sweep,
                         sweep_scenarios, validate)
from dyadsim.coupling import Mode
from dyadsim.presets import PRESETS, preset


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


class TestValidate:
    @pytest.mark.parametrize("name", PRESETS)
    def test_presets_clean(self, name):
        assert validate(name) == []
        assert validate(preset(name)) == []

    def test_negative_damping_names_field(self):
        out = validate({"preset": "hard", "coupling": {"C_joint": -1.0}})
        assert out == ["coupling.C_joint: damping must be >= 0"]

    def test_negative_stiffness_needs_flag(self):
        out = validate({"preset": "hard", "coupling": {"K_joint": -3.0}})
        assert len(out) == 1 and "competitive" in out[0] and out[0].startswith("coupling.K_joint")

    def test_collects_every_problem(self):
        out = validate({"duration": -1.0, "dt": 0.0, "coupling": {"C_joint": -1.0},
                        "limits": {"tau_max": -2.0}})
        fields = {m.split(":")[0] for m in out}
        assert {"duration", "dt", "coupling.C_joint", "limits.tau_max"} <= fields

    def test_path_and_unreadable(self, tmp_path):
        ok = write_yaml(tmp_path / "ok.yaml", {"preset": "soft"})
        assert validate(ok) == []
        assert validate(tmp_path / "missing.yaml")[0].startswith("config:")


class TestSweep:
    def test_parse(self):
        assert parse_sweep(["K=0,30,70"]) == {"K": [0.0, 30.0, 70.0]}
        assert parse_sweep(["K=0,70", "C=0,10"]) == {"K": [0.0, 70.0], "C": [0.0, 10.0]}

    @pytest.mark.parametrize("bad", [["K"], ["K=a"], ["X=1"], ["K=1,2", "C=1"]])
    def test_parse_errors(self, bad):
        with pytest.raises(ValueError):
            parse_sweep(bad)

    def test_scenarios(self):
        scs = sweep_scenarios(preset("nc"), {"K": [0.0, 70.0]})
        assert [s.coupling.mode for s in scs] == [Mode.BIDIRECTIONAL] * 2
        np.testing.assert_array_equal(scs[1].coupling.K_joint, 70.0)
        np.testing.assert_array_equal(scs[1].coupling.C_joint, 10.0)
        assert scs[0].label != scs[1].label


class TestMain:
    def test_unknown_preset(self, tmp_path, capsys):
        assert main(["--preset", "medium", "--out", str(tmp_path)]) == EXIT_USAGE
        err = capsys.readouterr().err
        assert "medium" in err and "hard-knee20" in err

    def test_validate_flag(self, tmp_path, capsys):
        assert main(["--preset", "hard", "--validate"]) == EXIT_OK
        assert "no violations" in capsys.readouterr().out
        bad = write_yaml(tmp_path / "bad.yaml", {"preset": "hard", "coupling": {"C_joint": -1}})
        assert main(["--config", str(bad), "--validate"]) == EXIT_USAGE
        assert "coupling.C_joint" in capsys.readouterr().out
        assert not (tmp_path / "hard").exists()

    def test_invalid_config_not_run(self, tmp_path):
        bad = write_yaml(tmp_path / "bad.yaml", {"preset": "hard", "durration": 3})
        assert main(["--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_USAGE
        assert not (tmp_path / "o").exists()

    def test_abort(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "ab.yaml", {
            "preset": "hard", "duration": 5.0,
            "coupling": {"K_joint": -5000.0, "competitive": True},
            "limits": {"tau_max": None, "qdot_max": None, "p_max": None, "lag_tau": 0.0}})
        with pytest.warns(UserWarning):
            code = main(["--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == EXIT_ABORT
        assert "aborted at tick" in capsys.readouterr().err

    def test_unwritable_out(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["--preset", "soft", "--duration", "1", "--out", str(blocker / "o")]) \
            == EXIT_IO

    def test_nc_run_outputs(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["run", "--preset", "nc", "--duration", "60", "--seed", "7",
                     "--out", str(out)]) == EXIT_OK
        assert (out / "summary.csv").is_file()
        assert (out / "nc" / "timeseries.csv").is_file()
        assert (out / "nc" / "cycles.csv").is_file()
        log = io.read_timeseries(out / "nc" / "timeseries.csv")
        assert len(log) == 20000
        assert np.all(log.tau_des == 0) and np.all(log.tau_app == 0)
        assert "nc: hip" in capsys.readouterr().out

    def test_neutral_angle_trend(self, tmp_path):
        out = tmp_path / "o"
        for name in ("hard", "hard-hip30"):
            assert main(["--preset", name, "--duration", "30", "--out", str(out / name)]) == 0
        hard = io.read_summary(out / "hard" / "summary.csv")[0]
        hip30 = io.read_summary(out / "hard-hip30" / "summary.csv")[0]
        assert hip30["hip_mad_deg"] > 5 * hard["hip_mad_deg"]

    def test_sweep_rows_decrease(self, tmp_path):
        out = tmp_path / "o"
        assert main(["run", "--sweep", "K=0,30,70", "--duration", "30",
                     "--out", str(out)]) == EXIT_OK
        rows = io.read_summary(out / "summary.csv")
        assert len(rows) == 3
        hips = [r["hip_mad_deg"] for r in rows]
        knees = [r["knee_mad_deg"] for r in rows]
        assert hips[0] > hips[1] > hips[2] and knees[0] > knees[1] > knees[2]

    def test_static_preset_reports_transfer(self, tmp_path, capsys):
        assert main(["--preset", "uni-task-static", "--out", str(tmp_path)]) == EXIT_OK
        text = capsys.readouterr()
        assert "fraction" in text.out and "warning" not in text.err
        row = io.read_summary(tmp_path / "summary.csv")[0]
        assert 0.6 <= row["static_fraction"] <= 0.9

    def test_overrides(self, tmp_path):
        out = tmp_path / "o"
        assert main(["--preset", "soft", "--duration", "4", "--latency", "3",
                     "--k-scale", "2", "--out", str(out)]) == EXIT_OK
        log = io.read_timeseries(out / "soft" / "timeseries.csv")
        assert len(log) == replace(preset("soft"), duration=4.0).n_ticks
        # gains doubled to 60/8, torque on B sees state three ticks old
        s = 30
        q, qd = log.q[s - 3], log.qdot[s - 3]
        tb = 60.0 * (q[0] - q[1]) + 8.0 * (qd[0] - qd[1])
        np.testing.assert_allclose(log.tau_des[s, 1], tb, atol=1e-9)

    def test_console_script(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "dyadsim.cli", "--preset", "hard",
                              "--validate"], capture_output=True, text=True)
        assert res.returncode == 0 and "ok" in res.stdout
