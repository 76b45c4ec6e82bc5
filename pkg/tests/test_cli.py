import csv
import json

import pytest
import yaml

from glab.cli import config_hash, main, run, validate
from glab.errors import ConfigError


def write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def test_constants_bounded_tail(tmp_path, capsys):
    path = write(tmp_path, {"kind": "constants", "d": 5, "tail": {"variant": "bounded", "range": 1.0}})
    assert main(["constants", "--config", path]) == 0
    row = json.loads(capsys.readouterr().out.splitlines()[0])
    assert row["G_star_alpha"] is None
    assert row["M_star"]["value"] == pytest.approx((10 * row["G_star"]["value"]) ** 0.5)
    assert row["R_star"]["value"] == pytest.approx(2 * row["G_star"]["value"])


def test_variance_scan_d1(tmp_path, capsys):
    path = write(tmp_path, {"kind": "variance-scan", "d_grid": [1], "N_grid": [2, 4, 8]})
    out = tmp_path / "v.jsonl"
    assert main(["variance-scan", "--config", path, "--out", str(out), "--csv"]) == 0
    rows = [json.loads(s) for s in out.read_text().splitlines()]
    assert [r["var_phi"] for r in rows] == pytest.approx([3, 5, 9])
    summary = json.loads(capsys.readouterr().out)
    assert all(r["config_hash"] == summary["config_hash"] for r in rows)
    table = list(csv.DictReader(out.with_suffix(".csv").open()))
    assert len(table) == 3 and float(table[2]["var_phi"]) == pytest.approx(9)


def test_determinism():
    cfg = {"d": 3, "L": 1, "N_grid": [4, 6], "b_grid": [0.3], "tail": {"variant": "stretched_exp", "alpha": 1.0}, "replicates": 3000, "seed": 17}
    a, b = run("deviation", dict(cfg)), run("deviation", dict(cfg))
    assert a.payload == b.payload and a.config_hash == b.config_hash
    c = run("deviation", {**cfg, "seed": 18})
    assert c.payload != a.payload


def test_config_hash_recomputable():
    rec = run("variance-scan", {"d_grid": [1], "N_grid": [3]})
    assert config_hash(rec.config) == rec.config_hash


def test_bad_field_named(tmp_path, capsys):
    path = write(tmp_path, {"kind": "variance-scan", "d_grid": [1], "N_grid": [2, -4]})
    assert main(["variance-scan", "--config", path]) == 2
    assert "N_grid.1" in capsys.readouterr().err
    with pytest.raises(ConfigError) as info:
        validate("deviation", {"d": 5, "L": 1, "N_grid": [4], "tail": {"variant": "gaussian"}, "replicates": 10})
    assert "b_grid" in str(info.value)
    with pytest.raises(ConfigError):
        validate("variance-scan", {"d_grid": [1], "N_grid": [2], "colour": "red"})


def test_set_override_and_seed(tmp_path, capsys):
    path = write(tmp_path, {"kind": "variance-scan", "d_grid": [1], "N_grid": [2]})
    assert main(["variance-scan", "--config", path, "--set", "N_grid=[5]", "--seed", "3"]) == 0
    row = json.loads(capsys.readouterr().out.splitlines()[0])
    assert row["var_phi"] == pytest.approx(6)


def test_volume_cap_exit(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GLAB_VOLUME_CAP", "100")
    path = write(tmp_path, {"kind": "sample-field", "d": 3, "N": 5})
    assert main(["sample-field", "--config", path]) == 3


def test_kb_grid_rejected_for_bounded_tail():
    with pytest.raises(ConfigError):
        run("highpoints", {"d": 5, "N": 3, "tail": {"variant": "bounded"}, "Kb_grid": [1.0], "realizations": 2})


def test_sample_field_dump(tmp_path):
    rec = run("sample-field", {"d": 2, "N": 3, "dump": str(tmp_path / "phi.bin"), "seed": 1, "tail": {"variant": "gaussian"}})
    assert (tmp_path / "phi.bin").stat().st_size == 8 * 49
    assert rec.payload[0]["dump"].endswith("phi.bin") and rec.payload[0]["field_seed"] > 0


def test_verify_suites(tmp_path, capsys):
    assert main(["verify", "--suite", "nope"]) == 2
    assert "oracles" in capsys.readouterr().err
    out = tmp_path / "v.json"
    assert main(["verify", "--suite", "oracles", "--out", str(out)]) == 0
    table = json.loads(out.read_text())
    assert table["passed"] and all(r["passed"] for r in table["results"])
    assert main(["verify", "--suite", "variance"]) == 0


def test_max_sweep_reports_flagged_bracket():
    rec = run("max-sweep", {"d": 3, "N_grid": [3], "samples": 4, "seed": 2})
    row = rec.payload[0]
    assert row["M_star"] == pytest.approx((6 * 1.5163860591519) ** 0.5, rel=1e-6)
    assert row["bracket"] == [0.6, 1.3] and row["bracket_is_engineering_choice"] is True
