import json

import pytest

from stdp_lab.cli import main
from stdp_lab.config import SEED_ENV, ConfigError, load_config, parse_settings, settings_to_dict
from stdp_lab.rules import DerivativeMode

SMALL = ["--sequences", "4", "--trains", "20", "--workers", "1"]


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return path


# --- config ------------------------------------------------------------------------


def test_empty_document_gives_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, {}))
    assert (cfg.n_sequences, cfg.seq_len, cfg.n_trains, cfg.window) == (500, 160, 1000, 20)


def test_single_override(tmp_path):
    cfg = load_config(_write(tmp_path, {"experiment": {"n_sequences": 10}}))
    assert cfg.n_sequences == 10
    assert (cfg.seq_len, cfg.n_trains, cfg.window) == (160, 1000, 20)


@pytest.mark.parametrize(
    "doc",
    [
        {"rule": {"window": 0}},
        {"rule": {"windw": 5}},
        {"bogus": {}},
        {"trajectory": {"length": 50}},
        {"experiment": {"n_trains": -3}},
        {"activation": {"max_prob": 1.5}},
        {"rule": {"derivative_mode": "velocity"}},
        [1, 2],
        {"rule": 3},
    ],
)
def test_invalid_documents(tmp_path, doc):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, doc))


def test_malformed_json_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "{not json"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_enum_given_as_string():
    cfg = parse_settings({"rule": {"derivative_mode": "rate"}}).experiment
    assert cfg.rule.derivative_mode is DerivativeMode.RATE


def test_seed_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV, "77")
    assert load_config().master_seed == 77
    path = _write(tmp_path, {"experiment": {"master_seed": 5}})
    assert load_config(path).master_seed == 5
    assert load_config(path, {"master_seed": 9}).master_seed == 9
    monkeypatch.setenv(SEED_ENV, "seven")
    with pytest.raises(ConfigError):
        load_config()
    monkeypatch.delenv(SEED_ENV)
    assert load_config().master_seed == 12345


def test_settings_round_trip():
    settings = parse_settings({"rule": {"window": 7, "derivative_mode": "rate"}, "experiment": {"seq_len": 90}})
    again = parse_settings(json.loads(json.dumps(settings_to_dict(settings))))
    assert settings_to_dict(again) == settings_to_dict(settings)
    assert again.experiment.trajectory.length == 90


# --- CLI ---------------------------------------------------------------------------


def test_stdp_curve_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["stdp-curve", "--seed", "42", "--out", str(a), *SMALL]) == 0
    assert main(["stdp-curve", "--seed", "42", "--out", str(b), *SMALL]) == 0
    assert (a / "stdp_curve.csv").read_bytes() == (b / "stdp_curve.csv").read_bytes()


def test_manifest_reproduces_run(tmp_path):
    out = tmp_path / "run"
    assert main(["agreement", "--seed", "3", "--out", str(out), *SMALL]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 3
    assert manifest["outputs"] == ["agreement.csv"]
    cfg_path = _write(tmp_path, manifest["config"], "replay.json")
    replay = tmp_path / "replay"
    assert main(["agreement", "--config", str(cfg_path), "--out", str(replay), "--workers", "2"]) == 0
    assert (out / "agreement.csv").read_bytes() == (replay / "agreement.csv").read_bytes()


def test_gradcheck_exits_zero(tmp_path, capsys):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    assert "max relative error" in capsys.readouterr().out
    assert (tmp_path / "gradcheck.csv").exists()


def test_sgd_equiv_exits_zero(tmp_path):
    assert main(["sgd-equiv", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sgd_equiv.csv").read_text().startswith("step,objective,chain_rel_dev,fd_rel_dev\n")


def test_zero_sequences_is_config_error(tmp_path, capsys):
    assert main(["stdp-curve", "--sequences", "0", "--out", str(tmp_path)]) == 1
    assert "n_sequences" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["launch"], ["stdp-curve", "--frobnicate"], [], ["trace", "--workers", "0"]])
def test_usage_errors_exit_one(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv else argv) == 1
    assert capsys.readouterr().err


def test_constant_rate_agreement_is_runtime_error(tmp_path):
    cfg = _write(tmp_path, {"trajectory": {"slope_sigma": 0.0}})
    assert main(["agreement", "--config", str(cfg), "--out", str(tmp_path / "o"), *SMALL]) == 2


def test_unwritable_output_is_runtime_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["trace", "--out", str(blocker / "sub")]) == 2


def test_plots_written(tmp_path):
    for cmd in ("stdp-curve", "agreement", "trace"):
        assert main([cmd, "--plots", "--out", str(tmp_path), *SMALL]) == 0
    for name in ("stdp_curve.svg", "agreement.svg", "trace.svg"):
        assert (tmp_path / name).read_text().lstrip().startswith("<?xml")


def test_rate_dynamics_csv(tmp_path):
    assert main(["rate-dynamics", "--out", str(tmp_path), *SMALL]) == 0
    lines = (tmp_path / "rate_dynamics.csv").read_text().splitlines()
    assert lines[0] == "condition,mean_sq_slope,stderr,trials"
    assert [line.split(",")[0] for line in lines[1:]] == ["plastic", "frozen", "difference"]
