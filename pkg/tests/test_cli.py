import json
import subprocess
import sys

import pytest

from gradflow.cli import main
from gradflow.scenarios import SCENARIOS, ScenarioConfig


def write_config(tmp_path, name="config.json", **cfg):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def csv_bodies(out):
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_list_shows_builtins(capsys):
    assert main(["list"]) == 0
    text = capsys.readouterr().out
    for name in SCENARIOS:
        assert name in text
    assert len(SCENARIOS) == 6


def test_list_json(capsys):
    assert main(["list", "--json"]) == 0
    cat = json.loads(capsys.readouterr().out)
    names = [c["name"] for c in cat]
    assert set(SCENARIOS) <= set(names)
    assert all(c["description"] and "fields" in c for c in cat)


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["list", "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


@pytest.mark.parametrize("cfg", [
    {"scenario": "mm-convergence", "taus": []},
    {"scenario": "mm-convergence", "taus": [0.05, 0.1]},
    {"scenario": "mm-convergence", "taus": [0.1, -0.05]},
    {"scenario": "nope"},
    {"scenario": "mm-convergence", "energy": "no-such-energy"},
    {"scenario": "mm-convergence", "colour": 1},
    {"scenario": "custom", "energy": "quadratic"},
])
def test_config_validation_errors(tmp_path, cfg):
    assert main(["run", write_config(tmp_path, **cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == 2


def test_mm_convergence_run(tmp_path, capsys):
    out = tmp_path / "mm"
    cfg = write_config(tmp_path, scenario="mm-convergence", energy="quadratic", u0=1.0,
                       taus=[0.1, 0.05, 0.025], T=1.0)
    assert main(["run", cfg, "--out", str(out)]) == 0
    assert "PASS  mm-consistency-fitted-order" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["passed"]
    assert summary["results"]["order"] == pytest.approx(1.0, abs=0.1)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["taus"] == [0.1, 0.05, 0.025]
    assert {"numpy", "scipy", "gradflow"} <= set(manifest["versions"])
    assert manifest["wall_time_s"] >= 0
    assert (out / "convergence.csv").exists()


def test_cantor_run(tmp_path):
    out = tmp_path / "c"
    assert main(["run", write_config(tmp_path, scenario="cantor", depth=6), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["results"]["report"]["defect_w"] >= 0.9
    assert summary["results"]["report"]["defect_v"] <= 0.05
    assert all(c["passed"] for c in summary["checks"].values())
    assert {"cantor_g.csv", "cantor_v.csv", "cantor_w.csv", "cantor_psi.csv", "cantor_energy_w.csv"} \
        <= set(csv_bodies(out))


def test_module_error_is_recorded(tmp_path):
    out = tmp_path / "e"
    # depth 7 needs a finer grid than the default spacing
    assert main(["run", write_config(tmp_path, scenario="cantor", depth=7), "--out", str(out)]) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "error" and not summary["passed"]
    assert summary["error"]["type"] == "ResolutionError"
    assert (out / "manifest.json").exists()


def test_determinism_across_threads(tmp_path):
    cfg = write_config(tmp_path, scenario="mm-convergence", seed=3, solver={"policy": "random"})
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["run", cfg, "--out", str(a)]) == 0
    assert main(["run", cfg, "--out", str(b)]) == 0
    assert main(["run", cfg, "--out", str(c), "--threads", "4"]) == 0
    assert csv_bodies(a) == csv_bodies(b) == csv_bodies(c)
    assert csv_bodies(a)


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path, scenario="mm-convergence", seed=3)
    out = tmp_path / "s"
    main(["run", cfg, "--out", str(out), "--seed", "11"])
    assert json.loads((out / "manifest.json").read_text())["config"]["seed"] == 11


def test_threads_environment_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("GRADFLOW_THREADS", "3")
    out = tmp_path / "t"
    assert main(["run", write_config(tmp_path, scenario="mm-convergence"), "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["threads"] == 3
    monkeypatch.setenv("GRADFLOW_THREADS", "many")
    assert main(["run", write_config(tmp_path, scenario="mm-convergence"), "--out", str(out)]) == 2


def test_config_roundtrip():
    cfg = ScenarioConfig.from_dict({"scenario": "confinement", "eps": 0.1})
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gradflow.cli", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "cantor" in proc.stdout
