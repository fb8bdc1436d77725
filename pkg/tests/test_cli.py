import json
import subprocess
import sys
from pathlib import Path

import pytest

from fracpq.cli import main
from fracpq.config import DEFAULT_CONFIG, RunConfig
from fracpq.errors import ValidationError

ROOT = Path(__file__).resolve().parents[1]
SMALL = {"mesh": {"n_per_unit": 16}}


def _cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_shipped_default_config_matches_builtin():
    assert json.loads((ROOT / "configs" / "default.json").read_text()) == DEFAULT_CONFIG
    for f in (ROOT / "configs").glob("*.json"):
        RunConfig.load(f)


def test_lambda1_default_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["lambda1", "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"manifest.json", "eigenfunction.csv", "trace.csv"}
    raw = (out / "eigenfunction.csv").read_bytes()
    assert raw.startswith(b"x,u\n") and b"\r" not in raw and raw.endswith(b"\n")
    assert (out / "trace.csv").read_text().splitlines()[0] == "iter,quotient,residual"
    x, u = raw.decode().splitlines()[1].split(",")
    assert len(u.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 15
    man = json.loads((out / "manifest.json").read_text())
    for key in ("config", "config_sha256", "version", "wall_time", "summary", "reports", "certificates"):
        assert key in man
    assert man["status"] == "ok" and man["config_sha256"] == RunConfig.from_dict({}).sha256()


@pytest.mark.parametrize("data,needle", [
    ({"params": {"q": 2.0}}, "q < p"),
    ({"params": {"s": 1.5}}, "params.s"),
    ({"domain": []}, "empty domain"),
    ({"potential": {"kind": "catalog", "name": "nope"}}, "potential.name"),
    ({"solver": {"tol": -1}}, "solver.tol"),
    ({"bogus": 1}, "unknown field"),
])
def test_validation_exit_code(tmp_path, capsys, data, needle):
    assert main(["lambda1", "--config", _cfg(tmp_path, data), "--out", str(tmp_path / "o")]) == 2
    assert needle in capsys.readouterr().err


def test_malformed_json_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "params": {,\n}')
    assert main(["lambda1", "--config", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_nehari_requires_mu(tmp_path, capsys):
    assert main(["nehari", "--config", _cfg(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == 2
    assert "mu > 0" in capsys.readouterr().err


def test_nonconvergence_exit_code_keeps_trace(tmp_path):
    out = tmp_path / "o"
    cfg = _cfg(tmp_path, {**SMALL, "solver": {"max_iter": 1, "tol": 1e-14}})
    assert main(["lambda1", "--config", cfg, "--out", str(out)]) == 3
    assert (out / "trace.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["status"] == "nonconverged"


def test_nehari_empty_is_exit_3(tmp_path):
    cfg = _cfg(tmp_path, {**SMALL, "params": {"p": 3.0, "q": 2.0, "mu": 1.0, "lambda_factor": 0.9}})
    assert main(["nehari", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_certify_below_lambda1(tmp_path):
    out = tmp_path / "o"
    assert main(["certify", "--config", _cfg(tmp_path, {**SMALL, "certify": {"trials": 200}}), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["certificates"]["certificate"]["pass"] is True


@pytest.mark.parametrize("sub,extra", [
    ("lambda2", {}),
    ("oracle", {}),
    ("nehari", {"params": {"p": 3.0, "q": 2.0, "mu": 1.0, "lambda_factor": 1.5}}),
    ("mu-sweep", {"params": {"p": 3.0, "q": 2.0, "mu": 1.0, "lambda_factor": 1.5},
                  "sweep": {"mu_grid": [1.0, 0.5]}}),
    ("s-sweep", {"sweep": {"s_grid": [0.6, 0.7]}}),
    ("bbm", {"sweep": {"s_grid": [0.6, 0.7], "p_values": [2.0]}}),
])
def test_subcommands_run_and_report_roundtrips(tmp_path, sub, extra):
    out = tmp_path / "o"
    assert main([sub, "--config", _cfg(tmp_path, {**SMALL, **extra}), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["files"] and all((out / f).exists() for f in man["files"])
    assert main(["report", "--config", str(out / "manifest.json"), "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert rep["reproduced"] is True and rep["summary"] == man["summary"]


def test_report_detects_tampering(tmp_path):
    out = tmp_path / "o"
    assert main(["lambda1", "--config", _cfg(tmp_path, SMALL), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    man["summary"]["lambda_est"] += 1.0
    (out / "manifest.json").write_text(json.dumps(man))
    assert main(["report", "--config", str(out / "manifest.json"), "--out", str(tmp_path / "r")]) == 3


def test_seed_override_and_determinism(tmp_path):
    cfg = _cfg(tmp_path, SMALL)
    runs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["lambda1", "--config", cfg, "--out", str(out), "--seed", "7"]) == 0
        runs.append({p.name: p.read_bytes() for p in out.glob("*.csv")})
    assert runs[0] == runs[1]
    assert json.loads((tmp_path / "o0" / "manifest.json").read_text())["seed"] == 7


def test_threads_env_does_not_change_output(tmp_path, monkeypatch):
    cfg = _cfg(tmp_path, {**SMALL, "sweep": {"s_grid": [0.6, 0.7, 0.8], "p_values": [2.0, 3.0], "workers": 4}})
    outs = []
    for k, threads in enumerate(("1", "4")):
        monkeypatch.setenv("FRACPQ_THREADS", threads)
        out = tmp_path / f"o{k}"
        assert main(["bbm", "--config", cfg, "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in out.glob("*.csv")})
    assert outs[0] == outs[1]


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fracpq.cli", "oracle", "--config", _cfg(tmp_path, SMALL),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0 and "eigenvalues" in proc.stdout


def test_config_nodal_potential_length_checked():
    cfg = RunConfig.from_dict({**SMALL, "potential": {"kind": "nodal", "values": [1.0, 2.0]}})
    with pytest.raises(ValidationError, match="nodal values"):
        cfg.potential(cfg.build_mesh())
