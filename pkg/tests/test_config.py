import re

import pytest

from plugrl.agents.train import COMPATIBILITY
from plugrl.config import (
    HUB_ENV_VAR,
    ConfigError,
    compatibility_table,
    hub_store_path,
    parse_config,
    parse_value,
    resolve_document,
)


def _write(tmp_path, text, name="c.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, ""))
    assert cfg == parse_config(None)
    assert cfg.algo == "ppo" and cfg.env_id == "pole-v0"
    assert cfg.total_steps == 200_000 and cfg.seed == 0
    assert cfg.agent["encoder"] == "mlp"
    assert cfg.agent["encoder_options"]["hidden"] == [64, 64]


def test_override_beats_file(tmp_path):
    path = _write(tmp_path, "[agent]\nlr = 1e-3\n")
    assert parse_config(path).agent["lr"] == 1e-3
    assert parse_config(path, ["lr=5e-4"]).agent["lr"] == 5e-4
    assert parse_config(path, ["agent.lr=5e-4"]).agent["lr"] == 5e-4


def test_file_beats_registry_default(tmp_path):
    default = parse_config().agent["n_epochs"]
    cfg = parse_config(_write(tmp_path, "[agent]\nn_epochs = 7\n"))
    assert default != 7 and cfg.agent["n_epochs"] == 7


def test_nested_override_for_primitive_options(tmp_path):
    cfg = parse_config(None, ["encoder.hidden=[32, 16]", "train.seed=4"])
    assert cfg.agent["encoder_options"]["hidden"] == [32, 16]
    assert cfg.seed == 4 and cfg.agent_params()["seed"] == 4


def test_on_policy_rejects_prioritized_storage(tmp_path):
    path = _write(tmp_path, '[agent]\nalgo = "a2c"\n[storage]\nname = "prioritized"\n')
    with pytest.raises(ConfigError, match="rollout"):
        parse_config(path)


def test_dqn_accepts_prioritized(tmp_path):
    path = _write(tmp_path, '[agent]\nalgo = "dqn"\n[storage]\nname = "prioritized"\nalpha = 0.7\n')
    cfg = parse_config(path)
    assert cfg.agent["storage"] == "prioritized"
    assert cfg.agent["storage_options"]["alpha"] == 0.7


def test_compatibility_table_matches_enforcement():
    rows = compatibility_table()
    assert {r[0] for r in rows} == set(COMPATIBILITY)
    for algo, kind, allowed in rows:
        if kind != "storage":
            continue
        for name in ("rollout", "replay", "prioritized"):
            doc = {"agent": {"algo": algo}, "storage": {"name": name}}
            if name in allowed.split(", "):
                resolve_document(doc)
            else:
                with pytest.raises(ConfigError):
                    resolve_document(doc)


def test_unknown_key_lists_options_and_suggests(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config(_write(tmp_path, "[agent]\nlearning_rat = 1.0\n"))
    assert "valid options" in str(exc.value)
    with pytest.raises(ConfigError, match="did you mean 'gamma'"):
        parse_config(None, ["gamme=0.9"])


def test_unknown_section_and_identifier(tmp_path):
    with pytest.raises(ConfigError, match="did you mean 'agent'"):
        parse_config(_write(tmp_path, "[agnet]\nlr = 1\n"))
    with pytest.raises(ConfigError, match="did you mean 're3'"):
        parse_config(None, ['xplore.reward="re4"'])
    with pytest.raises(ConfigError, match="valid options"):
        parse_config(None, ['encoder.name="transformer"'])
    with pytest.raises(ConfigError, match="env id"):
        parse_config(None, ['env.id="pole-v9"'])


def test_slot_missing_for_algo():
    with pytest.raises(ConfigError, match="dqn has no distribution slot"):
        resolve_document({"agent": {"algo": "dqn"}, "distribution": {"name": "categorical"}})


def test_parse_error_reports_line_and_column(tmp_path):
    path = _write(tmp_path, "[agent]\nlr = 1e-3\ngamma = = 2\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(path)
    assert re.search(r"line 3, column \d+", str(exc.value))


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        parse_config("/nonexistent/plugrl.toml")


def test_train_section_validation():
    with pytest.raises(ConfigError, match="nonnegative integer"):
        parse_config(None, ["train.total_steps=-5"])
    with pytest.raises(ConfigError, match="key=value"):
        parse_config(None, ["lr"])


@pytest.mark.parametrize(
    "overrides",
    [
        [],
        ['agent.algo="a2c"', 'xplore.reward="re3"', "xplore.kappa=0.0"],
        ['agent.algo="dqn"', 'storage.name="prioritized"', 'xplore.reward="rnd"'],
        ['env.id="gridrooms-v0"', "env.size=15", 'agent.algo="a2c"'],
    ],
)
def test_to_toml_round_trip(tmp_path, overrides):
    cfg = parse_config(None, overrides, None)
    again = parse_config(_write(tmp_path, cfg.to_toml()))
    assert again == cfg
    assert again.to_toml() == cfg.to_toml()


def test_hub_path_precedence(monkeypatch):
    monkeypatch.delenv(HUB_ENV_VAR, raising=False)
    assert hub_store_path(None) is None
    monkeypatch.setenv(HUB_ENV_VAR, "/tmp/from-env")
    assert hub_store_path(None) == "/tmp/from-env"
    assert hub_store_path("") == "/tmp/from-env"
    assert hub_store_path("/tmp/explicit") == "/tmp/explicit"


def test_parse_value_literals():
    assert parse_value("3") == 3
    assert parse_value("5e-4") == 5e-4
    assert parse_value("true") is True
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value("ppo") == "ppo"
