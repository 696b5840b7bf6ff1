import csv
import json
import math
from pathlib import Path

import pytest

from hwflow import cli
from hwflow.errors import ConfigError, GateFailure
from hwflow.walks import MassProfile

ROOT = Path(__file__).resolve().parents[1]
EXP = ROOT / "experiments"


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_report(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_oracle_report(tmp_path):
    assert cli.main(["run", "--config", str(EXP / "item04_oracle.toml"), "--out-dir", str(tmp_path)]) == 0
    rows = read_report(tmp_path / "report.csv")
    assert list(rows[0]) == ["experiment", "parameter_json", "mean", "stderr", "n", "target", "z"]
    got = {(r["experiment"], json.loads(r["parameter_json"])["nu"].get("beta") is not None): float(r["mean"])
           for r in rows}
    assert got[("oracle.beta_plus", False)] == 4.0 and got[("oracle.beta_minus", True)] == -6.0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["passed"] and man["seed"] == 0 and man["version"] == cli.__version__


@pytest.mark.parametrize("body,key", [
    ('kind = "oracle"\nnu = { atoms = [[1.5, 1.0]] }\n', "nu.atoms[0]"),
    ('kind = "oracle"\nnu = { atoms = [[0.5, 1.0]] }\nkmax = 0\n', "kmax"),
    ('kind = "nothing"\n', "kind"),
    ('kind = "oracle"\n[[cases]]\nnu = { atoms = [[0.5, 1.0]] }\n[[cases]]\nnu = { beta = [[0.0, 1.0, 1.0]] }\n',
     "cases[1].nu.beta[0]"),
])
def test_config_errors_name_the_key(tmp_path, body, key):
    cfg = write(tmp_path, body)
    with pytest.raises(ConfigError) as exc:
        cli.run_experiment(cfg, out_dir=tmp_path / "out")
    assert exc.value.key == key
    assert cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "out")]) == 2


def test_bad_toml(tmp_path):
    cfg = write(tmp_path, "kind = \n")
    assert cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


SPEED = ('kind = "flow"\nmode = "speed"\ndrift = 0.0\nnu = { atoms = [[0.5, 1.0]] }\n'
         'eps = 0.05\nT = 0.2\nreplicas = 2000\n')


def test_reports_byte_identical(tmp_path):
    cfg = write(tmp_path, SPEED)
    for d in ("a", "b"):
        cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / d)])
    a = (tmp_path / "a" / "report.csv").read_bytes()
    assert a == (tmp_path / "b" / "report.csv").read_bytes()
    cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "c"), "--seed-override", "1"])
    assert a != (tmp_path / "c" / "report.csv").read_bytes()


def test_threads_keep_report(tmp_path):
    cfg = write(tmp_path, SPEED)
    cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "a"), "--threads", "1"])
    cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "b"), "--threads", "4"])
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_gate_failure_exit_code(tmp_path):
    cfg = write(tmp_path, 'kind = "oracle"\nnu = { atoms = [[0.5, 1.0]] }\nexpect_theta = 3.0\n')
    with pytest.raises(GateFailure):
        cli.run_experiment(cfg, out_dir=tmp_path / "x")
    assert cli.main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "y")]) == 1
    man = json.loads((tmp_path / "y" / "manifest.json").read_text())
    assert man["passed"] is False
    assert any(not g["passed"] for g in man["gates"])


def test_out_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--config", str(EXP / "item04_oracle.toml")]) == 0
    assert (tmp_path / "env" / "report.csv").exists()


def test_plot_config(tmp_path):
    assert cli.main(["run", "--config", str(EXP / "flow_plot.toml"), "--out-dir", str(tmp_path)]) == 0
    with open(tmp_path / "plotdata.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x", "mass"]
    keys = [(int(t), int(x)) for t, x, _ in rows[1:]]
    assert keys == sorted(keys) and all((x + t) % 2 == 0 for t, x in keys)


def test_emit_plotdata(tmp_path):
    cli.emit_plotdata([], tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "t,x,mass\n"
    cli.emit_plotdata([MassProfile(0, {0: 1.0})], tmp_path / "one.csv")
    assert (tmp_path / "one.csv").read_text().splitlines() == ["t,x,mass", "0,0,1"]
    hist = [MassProfile(1, {1: 0.3, -1: 0.7}), MassProfile(0, {0: 1.0})]
    cli.emit_plotdata(hist, tmp_path / "h.csv")
    with open(tmp_path / "h.csv", newline="") as fh:
        back = {(int(r["t"]), int(r["x"])): float(r["mass"]) for r in csv.DictReader(fh)}
    assert back == {(0, 0): 1.0, (1, -1): 0.7, (1, 1): 0.3}


def test_power_and_z():
    g = cli.Gate()
    assert math.isnan(cli.power_at(0.0, 0.1, g))
    assert cli.power_at(1.0, 0.01, g) > 0.999
    assert cli.power_at(1.0, 0.1, g) < 0.1
    row = cli.Row("x", {}, 1.0, 0.1, 10, math.nan)
    assert math.isnan(row.z)
    row = cli.evaluate(cli.Row("x", {}, 1.02, 0.001, 10, 1.0, ("rel", 0.05)), g)
    assert row.passed
