import json
from pathlib import Path

import pytest

from hgpw import cli, reproduce
from hgpw.config import ConfigError, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(path, text):
    path.write_text(text)
    return path


def test_minimal_mode_solve_fills_defaults(tmp_path):
    cfg = write(tmp_path / "m.ini", "[scenario]\nkind = mode-solve\n")
    sc = parse_config(cfg)
    assert sc.steps == ("mode-solve",)
    r = sc.resolved()
    assert r["layers"]["gap"] == 200.0
    assert r["mesh"]["policy"] == "default"
    assert r["regions"]["metal"] == "gold"
    assert r["materials"]["gold"] == "builtin:gold"


def test_unknown_key_is_reported_with_every_other_problem(tmp_path):
    cfg = write(tmp_path / "bad.ini", "[scenario]\nkind = mode-solve\n[layers]\ngap_widthh = 200\n"
                                      "core = thick\n[mesh]\npolicy = ultra\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(cfg)
    msg = str(exc.value)
    assert "gap_widthh" in msg and "core" in msg and "ultra" in msg


def test_stochastic_scenario_requires_seed(tmp_path):
    cfg = write(tmp_path / "s.ini", "[scenario]\nkind = simulate-cw\n")
    with pytest.raises(ConfigError, match="seed is required"):
        parse_config(cfg)
    assert parse_config(cfg, overrides={"seed": 5}).seed == 5


def test_unused_section_rejected(tmp_path):
    cfg = write(tmp_path / "u.ini", "[scenario]\nkind = mode-solve\n[cw]\nintensity = 3\n")
    with pytest.raises(ConfigError, match=r"\[cw\] is not used"):
        parse_config(cfg)


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path / "bad.ini", "[scenario]\nkind = mode-solve\n[layers]\ngap_widthh = 1\n")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    missing = write(tmp_path / "g.ini", "[scenario]\nkind = gap-sweep\ngeometry = nowhere.ini\n")
    assert cli.main(["run", "--config", str(missing), "--out", str(tmp_path / "o")]) == cli.EXIT_IO
    assert "nowhere.ini" in capsys.readouterr().err
    rec = write(tmp_path / "r.csv", "channel,timestamp_ps\n1,5\n1,3\n")
    cor = write(tmp_path / "c.ini", f"[scenario]\nkind = correlate\n[correlate]\nrecords = {rec}\n")
    assert cli.main(["run", "--config", str(cor), "--out", str(tmp_path / "o")]) == cli.EXIT_IO


def test_gap_sweep_writes_rows_and_manifest(tmp_path):
    out = tmp_path / "sweep"
    code = cli.main(["gap-sweep", "--config", str(CONFIGS / "gap_sweep.ini"), "--out", str(out),
                     "--mesh", "coarse"])
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("gap_nm,")
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["mesh"]["policy"] == "coarse"
    assert man["config"]["sweep"]["gaps"] == [200.0, 1000.0]
    assert set(man["outputs"]) == {"sweep.csv"}
    assert any(k.endswith("geometry.ini") for k in man["inputs"])


def _short_pipeline(tmp_path):
    text = (CONFIGS / "g2_pipeline.ini").read_text().replace("duration_s = 5", "duration_s = 1")
    return write(tmp_path / "pipe.ini", text)


def test_composite_equals_stepwise(tmp_path):
    pipe = _short_pipeline(tmp_path)
    assert cli.main(["run", "--config", str(pipe), "--out", str(tmp_path / "all")]) == 0

    body = pipe.read_text()
    head, rest = body.split("[emitter]", 1)
    sim = write(tmp_path / "sim.ini", "[scenario]\nkind = simulate-cw\nseed = 12345\n[emitter]"
                + rest.split("[correlate]")[0])
    assert cli.main(["run", "--config", str(sim), "--out", str(tmp_path / "s1")]) == 0
    cor = write(tmp_path / "cor.ini", "[scenario]\nkind = correlate\n[correlate]\n"
                f"records = {tmp_path / 's1' / 'records.csv'}\nestimator = full\n")
    assert cli.main(["run", "--config", str(cor), "--out", str(tmp_path / "s2")]) == 0
    fit = write(tmp_path / "fit.ini", "[scenario]\nkind = fit\n[fit]\n"
                f"data = {tmp_path / 's2' / 'g2.csv'}\nmodel = g2\ns = 1\ntau_ns = 2.74\n"
                "sigma_ps = 455\nconvolve = true\n")
    assert cli.main(["run", "--config", str(fit), "--out", str(tmp_path / "s3")]) == 0
    for name, d in (("records.csv", "s1"), ("g2.csv", "s2"), ("fit.json", "s3")):
        assert (tmp_path / "all" / name).read_bytes() == (tmp_path / d / name).read_bytes()


def test_manifest_rerun_is_byte_identical(tmp_path):
    pipe = _short_pipeline(tmp_path)
    assert cli.main(["run", "--config", str(pipe), "--out", str(tmp_path / "a")]) == 0
    man = tmp_path / "a" / "manifest.json"
    assert cli.main(["run", "--config", str(man), "--out", str(tmp_path / "b")]) == 0
    first = json.loads(man.read_text())["outputs"]
    second = json.loads((tmp_path / "b" / "manifest.json").read_text())["outputs"]
    assert first == second and first


def test_seed_override_changes_records(tmp_path):
    pipe = _short_pipeline(tmp_path)
    cli.main(["run", "--config", str(pipe), "--out", str(tmp_path / "a")])
    cli.main(["run", "--config", str(pipe), "--out", str(tmp_path / "b"), "--seed", "99"])
    assert (tmp_path / "a" / "records.csv").read_bytes() != (tmp_path / "b" / "records.csv").read_bytes()


def test_reproduce_runs_every_criterion_in_order(tmp_path, monkeypatch):
    called = []

    def stub(name, ok=True):
        def fn(**kw):
            called.append(name)
            return {"name": name, "passed": ok, "summary": "stub", "runtime_s": 0.0}
        return fn

    for name, fn in reproduce.ACCEPTANCE_RUNS:
        monkeypatch.setattr(reproduce, fn, stub(name))
    cfg = CONFIGS / "reproduce.ini"
    assert cli.main(["reproduce-paper", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert called == [n for n, _ in reproduce.ACCEPTANCE_RUNS]
    rows = (tmp_path / "r" / "acceptance.csv").read_text().splitlines()
    assert len(rows) == 1 + len(reproduce.ACCEPTANCE_RUNS)

    monkeypatch.setattr(reproduce, "check_beta", stub("beta", ok=False))
    assert cli.main(["reproduce-paper", "--config", str(cfg), "--out", str(tmp_path / "r2")]) == 1


def test_beta_scenario(tmp_path):
    out = tmp_path / "beta"
    assert cli.main(["run", "--config", str(CONFIGS / "beta.ini"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["beta"]["beta"] == pytest.approx(0.1156, abs=5e-4)
