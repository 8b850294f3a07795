"""Config parsing: defaults, strict keys, ranges, round-trips."""

import json

import pytest

from feduaf.config import config_from_dict, parse_config
from feduaf.exceptions import ConfigError, ParseError


def test_empty_object_gives_reference_defaults():
    cfg = config_from_dict({})
    assert cfg.training.rounds == 100
    assert cfg.training.local_epochs == 5
    assert cfg.training.lr == 1e-3
    assert cfg.uncertainty.passes == 5
    assert cfg.model.hidden_dim == 128
    assert cfg.model.fusion_dim == 128
    assert cfg.seeds == [1, 2, 3]
    assert cfg.strategy == "reliability_weighted"
    assert cfg.ablation.ua_fusion and cfg.ablation.rel_agg


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="federation.num_cleints"):
        config_from_dict({"federation": {"num_cleints": 5}})
    with pytest.raises(ConfigError, match="'outputs'"):
        config_from_dict({"outputs": "x"})


def test_out_of_range_reports_allowed_range():
    with pytest.raises(ConfigError, match="training.local_epochs.*>= 0"):
        config_from_dict({"training": {"local_epochs": -1}})
    with pytest.raises(ConfigError, match=r"\[0, 1\)"):
        config_from_dict({"federation": {"missing_ratio": 1.0}})
    with pytest.raises(ConfigError, match="passes"):
        config_from_dict({"uncertainty": {"passes": 1}})
    with pytest.raises(ConfigError, match="strategy"):
        config_from_dict({"strategy": "magic"})
    with pytest.raises(ConfigError, match="seeds"):
        config_from_dict({"seeds": []})


def test_bool_is_not_a_number():
    with pytest.raises(ConfigError):
        config_from_dict({"training": {"rounds": True}})


def test_fusion_dim_defaults_to_hidden():
    cfg = config_from_dict({"model": {"hidden_dim": 48}})
    assert cfg.model.fusion_dim == 48


def test_round_trip_identity():
    raw = {
        "federation": {"num_clients": 6, "missing_ratio": 0.4, "seed": 9},
        "model": {"hidden_dim": 16, "dropout": 0.2},
        "training": {"rounds": 7, "lr": 0.01},
        "strategy": "fedprox",
        "ablation": {"ua_fusion": False, "rel_agg": True},
        "seeds": [4, 5],
        "data_path": "some.jsonl",
    }
    cfg = config_from_dict(raw)
    again = config_from_dict(cfg.to_dict())
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


def test_parse_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"training": {"rounds": 3}}))
    cfg = parse_config(path)
    assert cfg.training.rounds == 3


def test_parse_config_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{nope")
    with pytest.raises(ParseError):
        parse_config(path)


def test_parse_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.json")
