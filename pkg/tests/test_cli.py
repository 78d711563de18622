import json

import pytest

from critchemo import cli
from critchemo.verify import CheckResult

SMALL = """[grid]
n = 512
[dynamics]
n = 256
samples = 200
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return str(path)


@pytest.fixture(scope="module")
def steady_json(tmp_path_factory):
    d = tmp_path_factory.mktemp("steady")
    (d / "run.cfg").write_text(SMALL)
    out = d / "steady.json"
    assert cli.run(["steady", "--config", str(d / "run.cfg"), "--out", str(out)]) == 0
    return str(out)


def test_validate(capsys):
    assert cli.run(["validate", "--d", "3", "--m1", "1.2", "--m2", "1.2"]) == 0
    out = capsys.readouterr().out
    assert "c_d = 0.0795774715459476" in out and "hls_sharp_symmetric" in out


def test_validate_rejects(capsys):
    assert cli.run(["validate", "--d", "3", "--m1", "1.2", "--m2", "1.3"]) == 1
    assert cli.run(["validate", "--d", "3", "--m1", "1.5", "--m2", "1.2"]) == 1
    assert "error" in capsys.readouterr().err


def test_config_strict_keys(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[grid]\nnn = 5\n")
    assert cli.run(["steady", "--config", str(bad), "--out", str(tmp_path / "x.json")]) == 1
    bad.write_text("[nope]\nn = 5\n")
    assert cli.run(["steady", "--config", str(bad), "--out", str(tmp_path / "x.json")]) == 1
    bad.write_text("[grid]\nn = five\n")
    assert cli.run(["steady", "--config", str(bad), "--out", str(tmp_path / "x.json")]) == 1


def test_config_hash_tracks_content(tmp_path):
    a = cli.load_config(None)
    p = tmp_path / "c.cfg"
    p.write_text("[grid]\nn = 2048\n")
    assert cli.load_config(p).hash() == a.hash()
    p.write_text("[grid]\nn = 1024\n")
    assert cli.load_config(p).hash() != a.hash()


def test_parse_mu():
    assert cli.parse_mu("0.8:1.2:9") == [0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2]
    assert cli.parse_mu("1.1, 0.9") == [0.9, 1.1]
    with pytest.raises(cli.ConfigError):
        cli.parse_mu("a:b")


def test_steady_writes_json(steady_json):
    doc = json.loads(open(steady_json).read())
    assert next(iter(doc)) == "_header"
    assert doc["_header"]["lines"][0].startswith("critchemo ")
    assert any(line.startswith("config_hash ") for line in doc["_header"]["lines"])
    assert doc["diagnostics"]["converged"] is True


def test_steady_no_convergence(tmp_path):
    path = tmp_path / "slow.cfg"
    path.write_text(SMALL + "[steady]\nmax_iter = 2\n")
    assert cli.run(["steady", "--config", str(path), "--out", str(tmp_path / "s.json")]) == 2


def test_hls(cfg, tmp_path):
    out = tmp_path / "hls.json"
    assert cli.run(["hls", "--config", cfg, "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert abs(doc["cstar"] / doc["exact_symmetric"] - 1) <= 1e-2
    assert doc["thresholds"]["A"] == 1.0


def test_evolve(cfg, steady_json, tmp_path):
    out, plot = tmp_path / "trace.csv", tmp_path / "plot.csv"
    code = cli.run(["evolve", "--config", cfg, "--steady", steady_json, "--mu", "0.9",
                    "--out", str(out), "--plot-out", str(plot), "--plot-rows", "50"])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# critchemo") and lines[-1].startswith("# event,HorizonReached,")
    data = [ln for ln in plot.read_text().splitlines() if not ln.startswith("#")]
    assert len(data) == 51  # header plus 50 rows


def test_sweep_nine_rows_and_determinism(cfg, steady_json, tmp_path):
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        assert cli.run(["sweep", "--config", cfg, "--steady", steady_json, "--mu", "0.8:1.2:9",
                        "--out", str(out)]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    rows = [ln for ln in outs[0].read_text().splitlines() if not ln.startswith("#")]
    assert rows[0].split(",")[5] == "verdict" and len(rows) == 10
    verdicts = [r.split(",")[5] for r in rows[1:]]
    assert verdicts[4] == "Undecided"
    assert set(verdicts[:4]) == {"Global"} and set(verdicts[5:]) == {"BlowUp"}


def test_jobs_environment(cfg, steady_json, tmp_path, monkeypatch):
    seen = {}

    def fake_sweep(mus, state, p, rc, spec, jobs):
        seen["jobs"] = jobs
        return []

    monkeypatch.setattr(cli, "sweep", fake_sweep)
    monkeypatch.setenv("CRITCHEMO_JOBS", "3")
    assert cli.run(["sweep", "--config", cfg, "--steady", steady_json, "--mu", "0.9",
                    "--out", str(tmp_path / "s.csv")]) == 0
    assert seen["jobs"] == 3
    assert cli.run(["sweep", "--config", cfg, "--steady", steady_json, "--mu", "0.9", "--jobs", "2",
                    "--out", str(tmp_path / "s.csv")]) == 0
    assert seen["jobs"] == 2


def test_verify_exit_codes(cfg, monkeypatch):
    monkeypatch.setattr(cli, "run_all", lambda vc, dynamics: [CheckResult(1, "x", True, "")])
    assert cli.run(["verify", "--config", cfg]) == 0
    monkeypatch.setattr(cli, "run_all", lambda vc, dynamics: [CheckResult(1, "x", False, "")])
    assert cli.run(["verify", "--config", cfg]) == 3


def test_verify_without_dynamics(cfg, capsys):
    assert cli.run(["verify", "--config", cfg, "--skip-dynamics"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 6
