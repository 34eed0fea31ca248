import json
import math

import pytest
import yaml

from lpkernels import cli
from lpkernels.config import DEFAULTS, apply_overrides, load_config, validate
from lpkernels.errors import ConfigError


def _write(tmp_path, data):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(data))
    return str(p)


def test_defaults_validate():
    cfg = validate({})
    assert cfg.seed == 0 and cfg.checks == DEFAULTS["checks"]


@pytest.mark.parametrize("raw, path", [
    ({"bogus": 1}, "bogus"),
    ({"series": {"max_n": "six"}}, "series.max_n"),
    ({"potential": {"kind": "coulomb"}}, "potential.kind"),
    ({"checks": ["kato", "nope"]}, "checks[1]"),
    ({"kernel": {"points": [{"N": 1, "x": [0, 0], "y": [0, 0, 0]}]}}, "kernel.points[0].x"),
    ({"seed": -1}, "seed"),
])
def test_invalid_fields_name_their_path(raw, path):
    with pytest.raises(ConfigError) as exc:
        validate(raw)
    assert exc.value.field_path == path
    assert path in str(exc.value)


def test_override_precedence():
    cfg = validate({"seed": 1, "jobs": 1})
    env = {"LPKERNELS_SEED": "5", "LPKERNELS_JOBS": "2"}
    apply_overrides(cfg, None, None, env)
    assert (cfg.seed, cfg.jobs) == (5, 2)
    apply_overrides(cfg, 9, 3, env)
    assert (cfg.seed, cfg.jobs) == (9, 3)


def test_shipped_scenarios_load():
    for name in ("small-yukawa", "large-gaussian", "deep-well", "determinism"):
        cfg = load_config(cli.shipped_config(name))
        assert cfg.scenario == name


def test_kato_on_yukawa(tmp_path):
    cfg = _write(tmp_path, {"potential": {"kind": "yukawa", "amplitude": 1.0, "mu": 1.0}})
    out = tmp_path / "out"
    assert cli.main(["kato", "--config", cfg, "--out", str(out), "--no-cache"]) == cli.EXIT_PASS
    report = json.loads((out / "kato.json").read_text())
    assert report["results"]["kato_norm"] == pytest.approx(4 * math.pi, abs=1e-6)
    assert report["config"]["potential"]["kind"] == "yukawa"
    assert "threshold_ledger" in report
    assert (out / "kato_profile.csv").exists()


def test_thresholds_on_zero_potential(tmp_path):
    cfg = _write(tmp_path, {"potential": {"kind": "zero"}})
    out = tmp_path / "out"
    assert cli.main(["thresholds", "--config", cfg, "--out", str(out)]) == cli.EXIT_PASS
    report = json.loads((out / "thresholds.json").read_text())
    assert report["results"]["eps"] is None


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, {"series": {"mc_samples": 0}})
    assert cli.main(["kato", "--config", cfg, "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert "series.mc_samples" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(tmp_path):
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE


def test_regime_error_is_actionable(tmp_path, capsys):
    cfg = _write(tmp_path, {"potential": {"kind": "gaussian", "amplitude": 3.0, "width": 1.0},
                            "thresholds": {"N0": 0.001}})
    code = cli.main(["kernel", "--config", cfg, "--out", str(tmp_path), "--no-cache"])
    assert code == cli.EXIT_USAGE
    assert "4 pi" in capsys.readouterr().err


def test_reports_are_reproducible(tmp_path):
    cfg = _write(tmp_path, {"potential": {"kind": "yukawa", "amplitude": 0.5, "mu": 1.0},
                            "checks": ["kato", "kernel"],
                            "series": {"max_n": 2, "mc_samples": 500, "mc_budget": 500}})
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["all", "--config", cfg, "--out", str(out), "--seed", "11"]) == 0
    assert cli.canonical_report_bytes(a) == cli.canonical_report_bytes(b)
    assert json.loads((a / "all.json").read_text())["config"]["seed"] == 11


def test_figures_are_optional(tmp_path):
    pytest.importorskip("matplotlib")
    cfg = _write(tmp_path, {"potential": {"kind": "ball", "amplitude": 1.0, "radius": 1.0}})
    out = tmp_path / "out"
    assert cli.main(["kato", "--config", cfg, "--out", str(out), "--figures"]) == 0
    assert (out / "kato_profile.png").exists()
