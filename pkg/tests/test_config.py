from __future__ import annotations

from pathlib import Path

import pytest

from supportskills.config import Config, ConfigError, load_config, load_file


def test_defaults():
    cfg = load_config(env={})
    assert (cfg.min_support, cfg.effectiveness_threshold, cfg.n_verify, cfg.max_attempts) == (5, 0.6, 15, 3)
    assert (cfg.success_threshold, cfg.failure_threshold, cfg.max_turns, cfg.top_k) == (100, 10, 20, 3)
    assert cfg.output_dir == str(Path.cwd() / "runs")
    assert not cfg.scripted


def test_precedence_cli_over_file_over_env(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('[backend]\nurl = "http://file"\nmodel = "file-model"\n[evolution]\nn_verify = 7\n[run]\nparallelism = 2\n')
    env = {"BACKEND_URL": "http://env", "BACKEND_MODEL": "env-model", "BACKEND_API_KEY": "sk-env"}
    cfg = load_config({"parallelism": 4, "n_verify": None}, path, env)
    assert cfg.backend_url == "http://file" and cfg.backend_model == "file-model"
    assert cfg.api_key == "sk-env"
    assert cfg.n_verify == 7 and cfg.parallelism == 4
    assert load_config(env=env).backend_url == "http://env"


def test_paths_resolve_against_their_source(tmp_path, monkeypatch):
    conf_dir = tmp_path / "conf"
    conf_dir.mkdir()
    path = conf_dir / "run.toml"
    path.write_text('corpus = "data/ius.ndjson"\nbank = "bank"\n')
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)
    cfg = load_config({"bank": "mybank", "script_dir": "scripts"}, path, env={})
    assert cfg.corpus == str(conf_dir / "data" / "ius.ndjson")
    assert cfg.bank == str(work / "mybank")
    assert cfg.script_dir == str(work / "scripts") and cfg.scripted
    assert cfg.output_dir == str(work / "runs")


def test_snapshot_masks_the_key():
    snap = Config(api_key="sk-secret").snapshot()
    assert snap["api_key"] == "***"
    assert "sk-secret" not in repr(snap)
    assert Config().snapshot()["api_key"] == ""


def test_types_are_coerced_from_strings():
    cfg = load_config({"strict": "yes", "timeout": "2.5", "max_turns": "4"}, env={})
    assert cfg.strict is True and cfg.timeout == 2.5 and cfg.max_turns == 4


@pytest.mark.parametrize(
    "override",
    [
        {"timeout": 0}, {"max_retries": -1}, {"parallelism": 0}, {"min_support": 0},
        {"effectiveness_threshold": 1.5}, {"max_turns": 0}, {"top_k": 0}, {"grade_a": 20},
        {"n_verify": 0}, {"max_attempts": 0}, {"consolidator": "vote"},
    ],
)
def test_validation(override):
    with pytest.raises(ConfigError):
        load_config(override, env={})


def test_unknown_keys_in_file(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[backend]\nflavour = 1\n")
    with pytest.raises(ConfigError):
        load_file(path)
    path.write_text("colour = 1\n")
    with pytest.raises(ConfigError):
        load_file(path)
    path.write_text("[simulation]\nmax_turns = 3\n")
    assert load_file(path) == {"max_turns": 3}
