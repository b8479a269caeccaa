import json
from pathlib import Path

import pytest

from hitlab.cli import main
from hitlab.config import ConfigError, ExperimentConfig

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def record(out, kind):
    return json.loads((Path(out) / f"{kind}.json").read_text())


@pytest.mark.parametrize("cfg_file", sorted(p.name for p in CONFIGS.glob("*.json") if "invalid" not in p.name))
def test_every_shipped_config_runs(cfg_file, tmp_path):
    kind = json.loads((CONFIGS / cfg_file).read_text())["kind"]
    out = tmp_path / "out"
    assert main([kind, "--config", str(CONFIGS / cfg_file), "--out", str(out)]) == 0
    rec = record(out, kind)
    assert rec["status"] == "ok"
    assert rec["config"]["kind"] == kind and rec["version"]
    assert all(Path(p).exists() for p in rec["outputs"])


def test_defaults_without_config(tmp_path):
    assert main(["survival", "--out", str(tmp_path)]) == 0


def test_survival_csv(tmp_path):
    assert main(["survival", "--config", str(CONFIGS / "survival_00.json"), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "survival.csv").read_text().splitlines()
    assert rows[4].split(",")[:2] == ["3", "0.5"]


def test_theta_record(tmp_path):
    assert main(["theta", "--config", str(CONFIGS / "theta_fixed.json"), "--out", str(tmp_path)]) == 0
    est = record(tmp_path, "theta")["results"]
    assert est["limit"] == "3/10" and est["below_half"]


def test_invalid_config_writes_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["survival", "--config", str(CONFIGS / "invalid_probabilities.json"), "--out", str(out)])
    assert code == 2
    assert not out.exists()
    assert "config invalid" in capsys.readouterr().err


def test_unknown_field_rejected(tmp_path):
    path = write_config(tmp_path, {"kind": "survival", "holes": ["00"]})
    assert main(["survival", "--config", path, "--out", str(tmp_path / "o")]) == 2


def test_kind_mismatch(tmp_path):
    path = write_config(tmp_path, {"kind": "theta"})
    assert main(["survival", "--config", path]) == 2


def test_unreadable_config(tmp_path):
    assert main(["survival", "--config", str(tmp_path / "missing.json")]) == 2


def test_cap_exceeded(tmp_path):
    path = write_config(tmp_path, {"kind": "survival", "hole": ["0" * 10], "caps": {"state_cap": 4}})
    out = tmp_path / "out"
    assert main(["survival", "--config", path, "--out", str(out)]) == 3
    assert record(out, "survival")["status"] == "cap-exceeded"


def test_non_convergence(tmp_path):
    path = write_config(tmp_path, {"kind": "escape-rate", "hole": ["01"], "caps": {"max_iter": 500}})
    assert main(["escape-rate", "--config", path, "--out", str(tmp_path / "o"), "--float"]) == 4


def test_degenerate_hole_is_invalid_input(tmp_path):
    path = write_config(tmp_path, {"kind": "survival", "hole": ["0", "1"]})
    assert main(["survival", "--config", path, "--out", str(tmp_path / "o")]) == 2


class TestReplay:
    def _run(self, tmp_path):
        out = tmp_path / "out"
        cfg = str(CONFIGS / "survival_mc.json")
        assert main(["survival", "--config", cfg, "--out", str(out), "--seed", "99"]) == 0
        return out / "survival.json"

    def test_reproduces(self, tmp_path):
        path = self._run(tmp_path)
        assert main(["replay", str(path)]) == 0
        assert main(["replay", str(path), "--seed", "99"]) == 0

    def test_refuses_other_seed(self, tmp_path, capsys):
        path = self._run(tmp_path)
        assert main(["replay", str(path), "--seed", "100"]) == 5
        assert "refusing" in capsys.readouterr().err

    def test_detects_tampering(self, tmp_path, capsys):
        path = self._run(tmp_path)
        rec = json.loads(path.read_text())
        rec["results"]["monte_carlo"]["curve"]["survival"][5] += 1e-9
        path.write_text(json.dumps(rec))
        assert main(["replay", str(path)]) == 5
        assert "monte_carlo/curve/survival/5" in capsys.readouterr().err

    def test_unreadable_record(self, tmp_path):
        assert main(["replay", str(tmp_path / "none.json")]) == 2


class TestConfig:
    def test_roundtrip(self):
        cfg = ExperimentConfig.load(CONFIGS / "ball_fixed.json")
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_rationals_as_strings_or_numbers(self):
        a = ExperimentConfig.from_dict({"measure": {"prob": ["3/10", "7/10"]}})
        b = ExperimentConfig.from_dict({"measure": {"prob": [0.3, 0.7]}})
        assert a.measure_model() == b.measure_model()

    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"threads": 0})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"kind": "nope"})
