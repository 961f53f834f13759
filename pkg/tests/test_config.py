import json

import pytest

from framebits.config import RunConfig, config_from_dict, load_config
from framebits.errors import InvalidConfig


def test_defaults_roundtrip(tmp_path):
    cfg = RunConfig()
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert load_config(path) == cfg
    assert cfg.analysis.gaps == [1, 2, 4, 8, 16, 32]
    assert cfg.rate_control.q_start == 24


def test_partial_override():
    cfg = config_from_dict({"forest": {"n_estimators": 7}, "threads": 3})
    assert cfg.forest.n_estimators == 7 and cfg.forest.max_depth == 16 and cfg.threads == 3


@pytest.mark.parametrize("doc", [{"colour": 1}, {"forest": {"trees": 5}}, {"gop": 3}])
def test_unknown_keys_rejected(doc):
    with pytest.raises(InvalidConfig):
        config_from_dict(doc)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(InvalidConfig):
        load_config(path)
    assert json.loads(RunConfig().to_json())["synth"]["epsilon"] == 0.1
