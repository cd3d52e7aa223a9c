import json
import subprocess
import sys

import pytest

from cknflow.cli import RunConfig, main, parse_range, n_workers
from cknflow.grid import ConfigError
from cknflow.io import read_csv


def _run(tmp_path, *argv):
    code = main([*argv, "--out-dir", str(tmp_path)])
    return code, tmp_path


def _manifest(d):
    return json.loads((d / "MANIFEST.json").read_text())


class TestHelpers:
    def test_parse_range(self):
        assert parse_range("0.1:0.3:0.1") == pytest.approx([0.1, 0.2, 0.3])
        for bad in ("1:2", "a:b:c", "1:0:0.1", "0:1:0"):
            with pytest.raises(ConfigError):
                parse_range(bad)

    def test_workers(self, monkeypatch):
        monkeypatch.setenv("CKN_THREADS", "64")
        assert 1 <= n_workers()
        monkeypatch.setenv("CKN_THREADS", "x")
        with pytest.raises(ConfigError):
            n_workers()

    def test_run_config_round_trip(self):
        rc = RunConfig("flow", {"d": 2, "p": 4.0, "Lambda": None, "tmax": 0.5}, 2 ** 63 - 1, "fast", "/tmp/x", "json")
        assert RunConfig.from_json(rc.to_json()) == rc


class TestConstants:
    def test_derive(self, tmp_path, capsys):
        code, d = _run(tmp_path, "constants", "--d", "3", "--a", "-1", "--b", "-0.4")
        assert code == 0
        obj = json.loads((d / "constants.json").read_text())
        assert obj["n"] == pytest.approx(7.5)
        assert json.loads(capsys.readouterr().out)["n"] == pytest.approx(7.5)
        m = _manifest(d)
        assert m["status"] == "ok" and m["exit_code"] == 0
        assert set(m["files"]) == {"constants.json", "config.json"}
        rc = RunConfig.from_json((d / "config.json").read_text())
        assert rc.command == "constants" and rc.params["a"] == -1.0

    def test_threshold(self, tmp_path):
        code, d = _run(tmp_path, "constants", "--d", "3", "--p", "4", "--Lambda", "0.6666667")
        obj = json.loads((d / "constants.json").read_text())
        assert code == 0 and obj["alpha_fs"] == pytest.approx(obj["alpha"], rel=1e-6)

    def test_malformed_flags(self, tmp_path):
        out = tmp_path / "never"
        assert main(["constants", "--d", "three", "--out-dir", str(out)]) == 2
        assert not out.exists()

    def test_domain_error(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["constants", "--d", "3", "--a", "0.7", "--b", "0", "--out-dir", str(out)]) == 2
        assert not out.exists() or not any(out.iterdir())
        assert "error" in capsys.readouterr().err

    def test_global_flag_before_subcommand(self, tmp_path):
        assert main(["--seed", "9", "--out-dir", str(tmp_path), "constants", "--d", "3", "--p", "4",
                     "--Lambda", "1"]) == 0
        assert RunConfig.from_json((tmp_path / "config.json").read_text()).seed == 9


class TestPhaseDiagram:
    def test_rows_and_order(self, tmp_path):
        code, d = _run(tmp_path, "phase-diagram", "--d", "3", "--a-min", "-2", "--a-max", "0.5",
                       "--samples", "200", "--svg")
        assert code == 0
        schema, rows = read_csv(d / "phase_diagram.csv")
        assert len(rows) == 200
        for r in rows:
            assert float(r["b_direct"]) >= float(r["b_fs"])
        zero = [r for r in rows if float(r["a"]) == 0.0]
        assert len(zero) == 1 and float(zero[0]["b_fs"]) == 0.0
        assert (d / "phase_diagram.svg").read_text().startswith("<svg")

    def test_byte_deterministic(self, tmp_path):
        outs = []
        for k in range(2):
            d = tmp_path / str(k)
            assert main(["phase-diagram", "--svg", "--samples", "50", "--out-dir", str(d)]) == 0
            files = {p.name: p.read_bytes() for p in d.iterdir()}
            cfg = json.loads(files.pop("config.json"))
            assert cfg.pop("out_dir") == str(d)
            outs.append((files, cfg))
        assert outs[0] == outs[1]

    def test_bad_range(self, tmp_path):
        assert main(["phase-diagram", "--a-min", "0", "--a-max", "2", "--out-dir", str(tmp_path / "x")]) == 2


class TestStability:
    def test_scan(self, tmp_path):
        code, d = _run(tmp_path, "--preset", "fast", "stability", "--d", "3", "--p", "4",
                       "--scan-lambda", "0.1:1.5:0.05")
        assert code == 0
        obj = json.loads((d / "stability.json").read_text())
        assert obj["threshold"] == pytest.approx(2 / 3, abs=1e-4)
        _, rows = read_csv(d / "stability.csv")
        assert list(rows[0]) == ["Lambda", "p", "k", "lambda_k", "e_k"]

    def test_json_format(self, tmp_path):
        code, d = _run(tmp_path, "--format", "json", "--preset", "fast", "stability", "--Lambda", "1")
        assert code == 0
        tab = json.loads((d / "stability_table.json").read_text())
        assert tab["columns"][-1] == "e_k" and len(tab["rows"]) == 3


class TestFlowMinimize:
    def test_flow(self, tmp_path):
        code, d = _run(tmp_path, "--preset", "fast", "flow", "--d", "2", "--p", "4", "--tmax", "0.2")
        assert code == 0
        obj = json.loads((d / "flow.json").read_text())
        assert obj["monotone"] and obj["gate"]
        _, rows = read_csv(d / "flow.csv")
        I = [float(r["fisher"]) for r in rows]
        assert all(b <= a + 1e-7 * I[0] for a, b in zip(I, I[1:]))

    def test_minimize_breaks_symmetry(self, tmp_path):
        code, d = _run(tmp_path, "--preset", "fast", "minimize", "--d", "2", "--p", "4",
                       "--Lambda-mult", "1.5", "--init", "mode1", "--snapshot")
        assert code == 0
        obj = json.loads((d / "minimize.json").read_text())
        assert obj["sym_fraction"] < 0.99 and obj["mu_estimate"] < obj["mu_star"]
        assert (d / "minimizer.bin").read_bytes()[:4] == b"CKN1"

    def test_minimize_needs_lambda(self, tmp_path):
        assert main(["minimize", "--out-dir", str(tmp_path / "x")]) == 2


class TestSpectral:
    def test_klt(self, tmp_path):
        code, d = _run(tmp_path, "klt", "--d", "2", "--q", "2", "--mu", "0.5:2.5:0.5")
        assert code == 0
        obj = json.loads((d / "klt.json").read_text())
        lo, hi = obj["mustar_bracket"]
        assert lo == pytest.approx(hi, rel=1e-6)
        _, rows = read_csv(d / "klt.csv")
        assert len(rows) == 5 and {r["regime"] for r in rows} == {"closed_form"}

    def test_hardy(self, tmp_path):
        code, d = _run(tmp_path, "hardy", "--d", "3", "--q", "2")
        assert code == 0
        assert json.loads((d / "hardy.json").read_text())["gap"] == 0.25

    def test_hardy_bad_q(self, tmp_path):
        assert main(["hardy", "--d", "3", "--q", "1.2", "--out-dir", str(tmp_path / "x")]) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "cknflow", "constants", "--d", "3", "--p", "4", "--Lambda", "1",
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["schema_version"] == 1


def test_gate_failure_exit_code(tmp_path, monkeypatch):
    import cknflow.cli as cli

    def failing(args, out):
        out.json("partial.json", {"ok": False})
        raise cli.GateFailure("Fisher information increased")

    monkeypatch.setitem(cli.COMMANDS, "constants", failing)
    assert main(["constants", "--d", "3", "--out-dir", str(tmp_path)]) == 1
    m = _manifest(tmp_path)
    assert m["status"] == "gate_failure" and m["exit_code"] == 1
    assert "partial.json" in m["files"]
