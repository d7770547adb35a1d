import json
import os
import subprocess
import sys

import pytest

from relaxbl import cli


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


SMALL = {"name": "small", "grid": {"n_cells": 64}, "solver": {"t_end": 0.05, "snapshot_every": 4}}


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "relaxbl", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()


@pytest.mark.parametrize("system", ["linear_reaction", "elasticity", "combustion"])
def test_check_strict_passes(system, capsys):
    assert cli.main(["check", "--system", system, "--strict", "--samples", "2000"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["strict_pass"] is True


def test_check_strict_fails_with_small_A(tmp_path, capsys):
    out = tmp_path / "rep.json"
    code = cli.main(["check", "--system", "elasticity", "--A", "0.1", "--strict", "--samples", "2000",
                     "--out", str(out)])
    assert code == 2
    rep = json.loads(out.read_text())
    h2 = next(r for r in rep["reports"] if r["hypothesis"] == "H2")
    assert h2["verdict"] == "fails" and h2["witness"] and h2["margin"] < 0


def test_check_non_strict_exit_zero_on_failure():
    assert cli.main(["check", "--system", "elasticity", "--A", "0.1", "--samples", "500"]) == 0


def test_run_t_end_zero_writes_one_snapshot(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "solver": {"t_end": 0.0}})
    out = tmp_path / "out"
    assert cli.main(["run", "--config", cfg, "--out", str(out)]) == 0
    snaps = sorted(p for p in os.listdir(out) if p.startswith("snapshot_"))
    assert snaps == ["snapshot_0000.csv"]
    lines = (out / "snapshot_0000.csv").read_text().splitlines()
    assert lines[0] == "# t=0.0" and lines[1] == "x,u_1,v_1,R_1" and len(lines) == 2 + 64


def test_run_outputs_and_manifest(tmp_path):
    raw = {**SMALL, "system": {"name": "elasticity"}}
    cfg = write_cfg(tmp_path, raw)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", cfg, "--out", str(out), "--reference", "--identities"]) == 0
    man = cli.RunManifest.read(str(out / "manifest.json"))
    assert man.verify() and man.command == "run"
    assert man.config["name"] == raw["name"]
    for f in man.outputs:
        assert (out / f).exists()
    assert any(f.startswith("equilibrium_snapshot_") for f in man.outputs)
    header = (out / "functionals.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "phi", "psi", "lyapunov_G"]


def test_golden_outputs_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "system": {"name": "combustion"}})
    dirs = []
    for k in range(2):
        d = tmp_path / f"o{k}"
        assert cli.main(["run", "--config", cfg, "--out", str(d), "--reference", "--identities"]) == 0
        dirs.append(d)
    names = sorted(os.listdir(dirs[0]))
    assert names == sorted(os.listdir(dirs[1]))
    for n in names:
        if n == "manifest.json":
            continue
        assert (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes(), n
    m0, m1 = (json.loads((d / "manifest.json").read_text()) for d in dirs)
    assert m0["config_hash"] == m1["config_hash"]


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    cfg = write_cfg(tmp_path, {**SMALL, "solver": {"t_end": 0.0}})
    assert cli.main(["run", "--config", cfg]) == 0
    (d,) = os.listdir(tmp_path / "root")
    assert d.startswith("run-small-")


def test_config_error_reports_path(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"solver": {"eps": -1}})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "solver.eps" in capsys.readouterr().err


def test_invalid_json_and_unknown_scenario(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["run", "--config", str(p)]) == 1
    assert cli.main(["run", "--scenario", "nope"]) == 1


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as ei:
        cli.main(["frobnicate"])
    assert ei.value.code != 0


def test_sweep_dx_assert_and_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"system": {"name": "elasticity"}, "solver": {"t_end": 0.2}})
    good = tmp_path / "dx"
    assert cli.main(["sweep-dx", "--config", cfg, "--n-cells", "32", "64", "128", "--out", str(good), "--assert"]) == 0
    s = json.loads((good / "summary.json").read_text())
    assert s["verdict"] == "pass" and 1.6 <= s["slope"] <= 2.3
    assert (good / "runs.json").exists() and (good / "loglog.dat").exists()

    bad = tmp_path / "dx1"
    # mark a finished sweep as failed to exercise the report gate
    assert cli.main(["sweep-dx", "--config", cfg, "--n-cells", "32", "64", "128", "--order", "1", "--out", str(bad)]) == 0
    s1 = json.loads((bad / "summary.json").read_text())
    s1["verdict"] = "fail"
    (bad / "summary.json").write_text(json.dumps(s1))
    capsys.readouterr()
    rep = tmp_path / "report.json"
    assert cli.main(["report", str(good), "--assert", "--out", str(rep)]) == 0
    assert cli.main(["report", str(good), str(bad), "--assert"]) == 3
    assert json.loads(rep.read_text())["verdict"] == "pass"


def test_report_detects_tampered_manifest(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "solver": {"t_end": 0.0}})
    d = tmp_path / "r"
    assert cli.main(["run", "--config", cfg, "--out", str(d)]) == 0
    m = json.loads((d / "manifest.json").read_text())
    m["config"]["seed"] = 99
    (d / "manifest.json").write_text(json.dumps(m))
    assert cli.main(["report", str(d), "--assert"]) == 3


def test_report_missing_manifest(tmp_path):
    assert cli.main(["report", str(tmp_path)]) == 1


def test_sweep_eps_small_linear(tmp_path):
    cfg = write_cfg(tmp_path, {"grid": {"n_cells": 256}, "solver": {"t_end": 0.2},
                               "sweep": {"eps": [4e-3, 2e-3, 1e-3], "floor_check": False}})
    out = tmp_path / "eps"
    assert cli.main(["sweep-eps", "--config", cfg, "--out", str(out), "--assert", "--decomposition"]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["gate"] == "lipschitz_source" and 1.7 <= s["slope"] <= 2.3
    runs = json.loads((out / "runs.json").read_text())
    assert len(runs) == 3 and "I5_norm" in runs[0]


def test_sweep_eps_assert_failure_exit_code(tmp_path, capsys):
    # a too-coarse grid drags the slope below the bounds; the dx-floor check is off so the fit is judged
    cfg = write_cfg(tmp_path, {"grid": {"n_cells": 16}, "solver": {"t_end": 0.2},
                               "sweep": {"eps": [4e-3, 2e-3, 1e-3, 5e-4], "floor_check": False}})
    assert cli.main(["sweep-eps", "--config", cfg, "--out", str(tmp_path / "e"), "--assert"]) == 3
    assert "assertion failed" in capsys.readouterr().err
