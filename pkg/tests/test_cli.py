import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from vbmo.cli import RunConfig, run
from vbmo.errors import ConfigError
from vbmo.fields import ScalarField, load_field, save_field
from vbmo.geometry import Domain


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


def test_decompose_rotation(tmp_path, capsys):
    out = tmp_path / "rot"
    code = run(["decompose", "--field", "rotation", "--N", "128", "--out", str(out)])
    assert code == 0
    summary = last_json(capsys.readouterr().out)
    assert summary["grad_q_l2"] < 1e-2 * summary["v0_l2"]
    for name in ("v0", "grad_q", "q", "q1", "q2"):
        assert load_field(out / f"{name}.field").grid.N == 128
    diag = json.loads((out / "diagnostics.json").read_text())
    assert set(diag) == {"config", "domain", "diagnostics"}
    assert not any(k.startswith("seconds") for k in diag["diagnostics"])


def test_decompose_deterministic(tmp_path, capsys):
    out = tmp_path / "same"
    args = ["decompose", "--field", "random", "--seed", "4", "--N", "128", "--out", str(out)]
    assert run(args) == 0
    first = (out / "diagnostics.json").read_bytes()
    assert run(args) == 0
    assert (out / "diagnostics.json").read_bytes() == first
    capsys.readouterr()


def test_decompose_mixed_oracle(tmp_path, capsys):
    out = tmp_path / "mixed"
    assert run(["decompose", "--out", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())["diagnostics"]
    assert diag["oracle_l2_dev"] < 0.02
    assert len(diag["charts"]) == 101
    capsys.readouterr()


def test_decompose_from_files(tmp_path, capsys):
    dom = Domain.ellipse(N=128)
    (tmp_path / "dom.json").write_text(json.dumps(dom.to_dict()))
    from vbmo.samples import random_smooth
    from vbmo.fields import save_field as sf
    sf(tmp_path / "v.field", random_smooth(dom.grid, 2))
    code = run(["decompose", "--domain", str(tmp_path / "dom.json"), "--field", str(tmp_path / "v.field"),
                "--no-oracle", "--out", str(tmp_path / "o")])
    assert code == 0
    assert "oracle_l2_dev" not in last_json(capsys.readouterr().out)


def test_forced_trace_exit(tmp_path, capsys):
    code = run(["decompose", "--field", "rotation", "--N", "64", "--force-trace", "0.5", "--out", str(tmp_path)])
    assert code == 4
    assert "error [neumann:helmholtz_decompose]" in capsys.readouterr().err


def test_config_and_io_errors(tmp_path, capsys):
    assert run(["decompose", "--N", "100", "--out", str(tmp_path)]) == 2
    assert "[cli:config]" in capsys.readouterr().err
    assert run(["decompose", "--field", str(tmp_path / "missing.field"), "--out", str(tmp_path)]) == 3
    assert "[cli:io]" in capsys.readouterr().err
    assert run(["decompose", "--field", "vortex", "--N", "64", "--out", str(tmp_path)]) == 1
    assert "unknown field" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        RunConfig(series_eps=-1.0).validate()


def test_seminorm(tmp_path, capsys):
    dom = Domain.disk(N=64)
    g = dom.grid
    save_field(tmp_path / "c.field", ScalarField(g, np.full((64, 64), 2.0)))
    assert run(["seminorm", str(tmp_path / "c.field"), "--mu", "0.5", "--nu", "0.25"]) == 1  # default disk is N=256
    assert "[cli:seminorm]" in capsys.readouterr().err
    (tmp_path / "d.json").write_text(json.dumps(dom.to_dict()))
    assert run(["seminorm", str(tmp_path / "c.field"), "--domain", str(tmp_path / "d.json"),
                "--mu", "0.5", "--nu", "0.25"]) == 0
    rep = last_json(capsys.readouterr().out)
    assert rep["bmo_value"] == pytest.approx(0.0, abs=1e-12)
    save_field(tmp_path / "s.field", ScalarField.from_function(g, lambda x, y: np.sign(y)))
    assert run(["seminorm", str(tmp_path / "s.field"), "--domain", str(tmp_path / "d.json"),
                "--mu", "1.0", "--nu", "0.25"]) == 0
    assert last_json(capsys.readouterr().out)["bmo_value"] == pytest.approx(1.0, abs=0.05)
    assert run(["seminorm", str(tmp_path / "none.field"), "--mu", "1", "--nu", "1"]) == 3


def test_counterexample(tmp_path, capsys):
    out = tmp_path / "g.csv"
    assert run(["counterexample", "--ell-max", "1", "--torus-N", "4096", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1 and rows[0]["ell"] == "1"
    assert run(["counterexample", "--ell-max", "8", "--out", str(out)]) == 0
    assert "strictly increasing: yes" in capsys.readouterr().out
    with pytest.raises(SystemExit) as e:
        run(["counterexample", "--ell-max", "0"])
    assert e.value.code == 2


@pytest.mark.parametrize("suite", ["gauss", "poisson", "parity", "single-layer"])
def test_verify(suite, capsys):
    assert run(["verify", suite]) == 0
    checks = json.loads(capsys.readouterr().out)
    assert checks and all(c["passed"] for c in checks)


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "vbmo.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("decompose", "seminorm", "counterexample", "verify"):
        assert sub in proc.stdout
