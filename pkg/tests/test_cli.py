import json

import numpy as np
import pytest

from qsmlab import cli, lindblad
from qsmlab.closedform import f_diffusive
from qsmlab.lindblad import NoiseRates

FIG3 = """
[run]
command = echo-lindblad
t_max = 10

[params]
n = 3
L = 1
k = 0.1, 10

[noise]
nu1 = 0.1
nu2 = 0.2
mode = alternating-pairs
"""


def _run(tmp_path, text, *args, name="run.ini"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / "out"
    return cli.main(["--config", str(cfg), "--out", str(out), *args]), out


def _csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# units:")
    assert lines[1] == "t,fidelity,stderr"
    return np.array([[float(x) for x in ln.split(",")] for ln in lines[2:]])


def test_echo_lindblad_two_curves(tmp_path):
    rc, out = _run(tmp_path, FIG3)
    assert rc == 0
    loc = _csv(out / "echo-lindblad_k0.1.csv")
    dif = _csv(out / "echo-lindblad_k10.csv")
    assert loc.shape == dif.shape == (11, 3)
    assert np.all(dif[1:, 1] < loc[1:, 1])
    side = json.loads((out / "echo-lindblad_k0.1.json").read_text())
    assert side["version"] and side["seed"] == 0 and side["config"]["noise"]["mode"] == "alternating-pairs"
    assert side["meta"]["k"] == 0.1 and side["units"]["t_fb"] == "forward-and-back map steps"


def test_outputs_byte_identical(tmp_path):
    rc1, out1 = _run(tmp_path, FIG3)
    first = {p.name: p.read_bytes() for p in out1.iterdir()}
    for p in out1.iterdir():
        p.unlink()
    rc2, out2 = _run(tmp_path, FIG3, "--threads", "8")
    assert rc1 == rc2 == 0
    assert {p.name: p.read_bytes() for p in out2.iterdir()} == first


def test_param_noise_identical_across_threads(tmp_path):
    text = "[run]\ncommand = echo-param\nt_max = 5\n[params]\nk = 1.5\n[noise]\nsigma = 0.5\nrealizations = 40\n"
    outs = []
    for threads in ("1", "8"):
        cfg = tmp_path / "p.ini"
        cfg.write_text(text)
        o = tmp_path / f"o{threads}"
        assert cli.main(["--config", str(cfg), "--out", str(o), "--threads", threads, "--seed", "17"]) == 0
        outs.append({p.name: p.read_bytes() for p in o.iterdir()})
    assert outs[0] == outs[1]
    side = json.loads(outs[0]["echo-param_k1.5.json"])
    assert side["seed"] == 17 and side["meta"]["seed"] == 17


def test_circuit_census(tmp_path):
    rc, out = _run(tmp_path, "[run]\ncommand = circuit\n[params]\nn = 3\nk = 4.55\n[circuit]\ntopology = linear\nemit_gates = yes\n")
    assert rc == 0
    census = json.loads((out / "circuit_k4.55.json").read_text())
    assert census["cnot_before_opt"] == 48
    assert census["cnot_after_opt"] <= 48
    assert census["census_logical"]["CP"] == 12
    from qsmlab.circuitgen import loads

    assert loads((out / "circuit_k4.55.qsm").read_text()).topology == "linear"


def test_theory_diffusive_plateau(tmp_path):
    rc, out = _run(tmp_path, "[run]\ncommand = theory\nt_max = 60\n[params]\nn = 6\n[theory]\nregime = diffusive\n")
    assert rc == 0
    data = _csv(out / "theory_diffusive.csv")
    assert data[0, 1] == 1.0
    assert abs(data[-1, 1] - 1 / 64) < 1e-6
    assert np.allclose(data[:, 1], f_diffusive(6, NoiseRates(0.1, 0.2), data[:, 0]), atol=1e-15)
    header = (out / "theory_diffusive.csv").read_text().splitlines()[0]
    assert "t=map steps" in header


def test_json_config_and_format(tmp_path):
    cfg = {"run": {"command": "theory", "t_max": 4}, "params": {"n": 2}, "theory": {"regime": ["localized"], "dt": 1}}
    rc, out = _run(tmp_path, json.dumps(cfg), "--format", "json", name="c.json")
    assert rc == 0
    doc = json.loads((out / "theory_localized.json").read_text())
    assert doc["data"]["t"] == [0.0, 1.0, 2.0, 3.0, 4.0]


def test_evolve_distribution(tmp_path):
    rc, out = _run(tmp_path, "[run]\ncommand = evolve\nt_max = 8\n[params]\nk = 0.1\n[evolve]\np0 = -2\ntimes = 0, 8\n")
    assert rc == 0
    rows = (out / "evolve_k0.1.csv").read_text().splitlines()
    assert rows[1] == "t,p,probability" and len(rows) == 2 + 2 * 8
    last = [r.split(",") for r in rows[-8:]]
    best = max(last, key=lambda r: float(r[2]))
    assert best[1] == "-2" and float(best[2]) > 0.5


def test_fit_command_round_trip(tmp_path):
    rc, out = _run(
        tmp_path,
        "[run]\ncommand = theory\nt_max = 5\n[params]\nn = 3\n[noise]\nnu1 = 0.334\nnu2 = 1.271\n"
        "[theory]\nregime = semi-localized, diffusive\nlayout = serial\ndt = 0.25\n",
    )
    assert rc == 0
    # gate-based serial theory is in map steps t; the fit model works in t_fb = t/2
    for name in ("semi-localized", "diffusive"):
        lines = (out / f"theory_{name}.csv").read_text().splitlines()
        rows = [ln.split(",") for ln in lines[2:]]
        body = "\n".join(f"{float(t) / 2!r},{f},{e}" for t, f, e in rows)
        (tmp_path / f"{name}.csv").write_text("t,fidelity,stderr\n" + body + "\n")
    fit_cfg = (
        f"[run]\ncommand = fit\n[params]\nn = 3\n[fit]\nlocalized = {tmp_path / 'semi-localized.csv'}\n"
        f"diffusive = {tmp_path / 'diffusive.csv'}\nwindow = 0, 2.5\n"
    )
    rc, out = _run(tmp_path, fit_cfg, name="fit.ini")
    assert rc == 0
    rep = json.loads((out / "fit.json").read_text())
    assert rep["fit"]["params"]["nu1"] == pytest.approx(0.334, abs=1e-6)
    assert rep["fit"]["params"]["nu2"] == pytest.approx(1.271, abs=1e-6)
    assert rep["physical"]["T1_s"] == pytest.approx(34.58e-6, rel=1e-3)
    assert set(rep["fit"]) >= {"model", "params", "stderr", "residual", "window", "seed"}


@pytest.mark.parametrize(
    "text,needle",
    [
        ("[run]\ncommand = teleport\n", "command"),
        ("[run\ncommand = theory\n", "section"),
        ("[run]\ncommand = theory\n[theory]\nbogus = 1\n", "bogus"),
        ("[run]\ncommand = theory\nt_max = zero\n", "t_max"),
        ("[run]\ncommand = echo-lindblad\n[params]\nL = 2\n", "odd"),
        ("[run]\ncommand = echo-kraus\n[noise]\nT1 = 1e-4\nT2 = 5e-4\n", "unphysical"),
        ("[run]\ncommand = echo-param\n", "sigma"),
        ("[run]\ncommand = theory\n[mystery]\nx = 1\n", "mystery"),
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, text, needle):
    rc, _ = _run(tmp_path, text)
    assert rc == cli.EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["--config", str(tmp_path / "nope.ini")]) == cli.EXIT_CONFIG


def test_numerical_failure_exit_3(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise lindblad.IntegratorError("RK4 Richardson check failed", 1e-3)

    monkeypatch.setattr(lindblad, "echo_lindblad", boom)
    rc, _ = _run(tmp_path, FIG3)
    assert rc == cli.EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_positional_command_and_overrides(tmp_path):
    out = tmp_path / "o"
    rc = cli.main(["circuit", "--set", "params.n=2", "--set", "circuit.topology=all-to-all", "--out", str(out)])
    assert rc == 0
    assert json.loads((out / "circuit_k0.1.json").read_text())["cnot_before_opt"] == 8
    assert cli.main(["theory", "--set", "broken"]) == cli.EXIT_CONFIG


def test_bad_threads(tmp_path):
    assert cli.main(["theory", "--threads", "0", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
