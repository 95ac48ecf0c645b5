import json

import pytest

from tiersim.config import (
    Config,
    ConfigError,
    ModelConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    dumps,
    load_config,
    model_preset,
    preset,
)

GB = 2**30


def test_preset_capacities():
    assert preset("stratum-s").total_capacity_bytes == 32 * GB
    assert preset("stratum-l").total_capacity_bytes == 192 * GB
    xl = preset("stratum-xl")
    assert xl.num_chips == 12 and xl.total_capacity_bytes == 384 * GB
    assert preset("stratum-s").num_chips == 1


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("stratum-m")


def test_bank_geometry():
    s = preset("stratum-l")
    assert s.banks_per_chip == 256
    assert s.n_bank == 1536
    assert s.row_buffer_bytes == 4096
    assert s.rows_per_bank == 32768
    assert s.interface_bw == pytest.approx(819.2e9)


def test_mixtral_expert_bytes():
    assert model_preset("mixtral-8x7b").expert_bytes == 352_321_536


def test_k_above_K_rejected():
    with pytest.raises(ConfigError) as e:
        ModelConfig(experts_per_layer=4, active_experts=5)
    assert e.value.field_name == "model.active_experts"


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict({"system": {"preset": "stratum-l", "num_chipz": 3}})
    with pytest.raises(ConfigError):
        config_from_dict({"extra": {}})


def test_wrong_schema_version():
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 99})


def test_round_trip():
    cfg = load_config("mixtral-stratum-l.json")
    again = config_from_dict(json.loads(dumps(cfg)))
    assert again == cfg
    assert config_to_dict(again) == config_to_dict(cfg)


def test_overrides_apply_before_validation():
    data = apply_overrides({"system": {"preset": "stratum-l"}}, ["system.num_chips=2", "sim.policy=no-tiering", "system.xpu.count=2"])
    cfg = config_from_dict(data)
    assert cfg.system.num_chips == 2
    assert cfg.system.xpu.count == 2
    assert cfg.sim.policy == "no-tiering"
    with pytest.raises(ConfigError):
        config_from_dict(apply_overrides({}, ["workload.max_batch=0"]))
    with pytest.raises(ConfigError):
        apply_overrides({}, ["no_equals_sign"])


def test_type_errors_are_config_errors():
    with pytest.raises(ConfigError):
        config_from_dict({"workload": {"max_batch": "eight"}})


def test_preset_dir_env(tmp_path, monkeypatch):
    (tmp_path / "mine.json").write_text(json.dumps({"system": {"num_chips": 3}}))
    monkeypatch.setenv("TIERSIM_PRESET_DIR", str(tmp_path))
    assert load_config("mine.json").system.num_chips == 3


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("does-not-exist.json")


def test_kv_tier_default_is_middle():
    assert Config().kv_tier == 4
