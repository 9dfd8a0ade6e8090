import json

import numpy as np
import pytest

from pedikit.cli import main, resolve_overrides, UsageError
from pedikit.dataset import load


@pytest.fixture()
def params_file(tmp_path):
    doc = {
        "flag": 0,
        "points": [[0.1 * i, 0.0, 0.2] for i in range(7)],
        "weights": [1, 1, 1, 1, 1, 1, 1],
        "q_start": [1, 0, 0, 0],
        "q_end": [0.7071068, 0, 0, 0.7071068],
        "duration": 2.0,
        "frame": "body",
    }
    p = tmp_path / "params.json"
    p.write_text(json.dumps(doc))
    return p


class TestEvalCurve:
    def test_t0_row_is_p0(self, params_file, capsys):
        assert main(["eval-curve", "--params", str(params_file), "--t", "0"]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        cells = out[1].split()
        assert [float(c) for c in cells[1:4]] == [0.0, 0.0, 0.2]

    def test_oracle_columns_match(self, params_file, capsys):
        assert main(["eval-curve", "--params", str(params_file), "--t", "0.25,0.5", "--oracle"]) == 0
        for line in capsys.readouterr().out.strip().splitlines()[1:]:
            vals = [float(c) for c in line.split()]
            assert np.allclose(vals[1:4], vals[8:11], atol=1e-9)

    def test_empty_t_list_header_only(self, params_file, capsys):
        assert main(["eval-curve", "--params", str(params_file), "--t", ""]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 1
        assert out[0].startswith("t ")

    def test_json_output(self, params_file, capsys):
        assert main(["eval-curve", "--params", str(params_file), "--t", "1", "--json"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["rows"][0]["point"][0] == pytest.approx(0.6)

    def test_malformed_file_diagnosed(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text('{"points": [[0,0,0.2]],\n  "weights": [1,]}')
        assert main(["eval-curve", "--params", str(p), "--t", "0"]) == 2
        err = capsys.readouterr().err
        assert "bad.json:2" in err

    def test_missing_field_diagnosed(self, tmp_path, capsys):
        p = tmp_path / "nofield.json"
        p.write_text('{"points": [[0,0,0.2]]}')
        assert main(["eval-curve", "--params", str(p), "--t", "0"]) == 2
        assert "weights" in capsys.readouterr().err


class TestCollectCommand:
    def test_small_collect_and_report(self, tmp_path, capsys):
        out = tmp_path / "ds.bin"
        rc = main([
            "collect", "--task", "press_button", "--n", "2", "--workers", "1",
            "--seed", "4", "--out", str(out),
        ])
        assert rc == 0
        text = capsys.readouterr().out
        assert "trajectories: 2 x 200 records" in text
        assert "wall time" in text
        ds = load(out)
        assert ds.n_trajectories == 2

    def test_unknown_task_lists_all_nine(self, capsys):
        rc = main(["collect", "--task", "presbutton", "--n", "1", "--out", "/tmp/x.bin"])
        assert rc == 2
        err = capsys.readouterr().err
        for name in (
            "press_button", "pull_handle", "push_door", "lift_basket", "open_dishwasher",
            "close_dishwasher", "pull_objects", "twist_valve", "shoot_ball",
        ):
            assert name in err


class TestEvalTracking:
    def test_report_output(self, tmp_path, capsys):
        out = tmp_path / "table.txt"
        rc = main(["eval-tracking", "--task", "press_button", "--runs", "2", "--seed", "0",
                   "--out", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "time to minimum" in text
        assert "reference: 0.4 rad" in text
        rows = out.read_text().strip().splitlines()
        assert rows[0].startswith("#")
        parts = rows[1].split()
        assert len(parts) == 5  # documented columnar format

    def test_zero_runs_rejected(self, capsys):
        assert main(["eval-tracking", "--task", "press_button", "--runs", "0"]) == 2


class TestOverrides:
    def test_set_unknown_key_suggests(self, capsys):
        rc = main(["eval-tracking", "--task", "press_button", "--runs", "1",
                   "--set", "controller.kpp=10"])
        assert rc == 2
        assert "controller.kp" in capsys.readouterr().err

    def test_precedence_cli_over_env_over_file(self, tmp_path, monkeypatch):
        cfg = tmp_path / "o.cfg"
        cfg.write_text("controller.kp = 10\n")
        monkeypatch.setenv("PEDI_CONTROLLER_KP", "20")
        merged = resolve_overrides(str(cfg), ["controller.kp=30"])
        assert merged["controller.kp"] == 30.0
        merged = resolve_overrides(str(cfg), [])
        assert merged["controller.kp"] == 20.0
        monkeypatch.delenv("PEDI_CONTROLLER_KP")
        merged = resolve_overrides(str(cfg), [])
        assert merged["controller.kp"] == 10.0

    def test_malformed_set(self):
        with pytest.raises(UsageError):
            resolve_overrides(None, ["controller.kp"])


class TestServeCommand:
    def test_port_in_use_is_runtime_fault(self, capsys):
        import socket

        blocker = socket.create_server(("127.0.0.1", 0))
        port = blocker.getsockname()[1]
        rc = main(["serve", "--task", "press_button", "--port", str(port)])
        blocker.close()
        assert rc == 3
        assert "cannot bind" in capsys.readouterr().err
