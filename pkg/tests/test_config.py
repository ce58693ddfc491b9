import json

import pytest

from hypoxmil import config
from hypoxmil.config import ConfigError, PipelineConfig, load_config


def test_defaults_round_trip():
    cfg = PipelineConfig()
    again = PipelineConfig.from_dict(json.loads(cfg.to_json()))
    assert again.to_json() == cfg.to_json() and again.digest() == cfg.digest()
    assert "seed" not in json.loads(cfg.to_json())["train"]


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"model": {"widht": 3}},
    {"train": {"lr": 0.1, "lrr": 2}},
    {"train": {"augment": {"spin": True}}},
    {"tiling": {"size": 3}},
    {"eval": {"n_repeat": 3}},
])
def test_unknown_keys_rejected(doc):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(doc)


@pytest.mark.parametrize("doc", [
    {"train": {"seed": 3}},
    {"eval": {"test_fraction": 1.0}},
    {"label": {"mode": "tertiles"}},
    {"train": {"lr": -1}},
    {"train": {"clip_norm": -1}},
])
def test_invalid_values_rejected(doc):
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict(doc)


def test_precedence_overrides_beat_file_beat_base(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"train": {"lr": 0.2, "epochs": 5}, "seed": 4}))
    base = {"train": {"lr": 0.9, "bag_size": 7}}
    cfg = load_config(str(p), {"train.epochs": 9}, base)
    assert (cfg.train.lr, cfg.train.epochs, cfg.train.bag_size) == (0.2, 9, 7)
    assert cfg.seed == 4 and cfg.train.seed == 4


def test_env_var_supplies_path(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 11}))
    monkeypatch.setenv(config.CONFIG_ENV, str(p))
    assert load_config().seed == 11


def test_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "none.json"))
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(str(tmp_path / "bad.json"))
    (tmp_path / "list.json").write_text("[1]")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "list.json"))


def test_parse_override():
    assert config.parse_override("train.lr=0.5") == ("train.lr", 0.5)
    assert config.parse_override("label.gene_set=HYP") == ("label.gene_set", "HYP")
    assert config.parse_override("model.backbone=[2,4]") == ("model.backbone", [2, 4])
    with pytest.raises(ConfigError):
        config.parse_override("nokey")
    with pytest.raises(ConfigError):
        load_config(overrides={"seed.x": 1})


def test_run_files_are_reproducible(tmp_path):
    cfg = PipelineConfig.synthetic()
    (tmp_path / "in.txt").write_text("x")
    outs = []
    for k in range(2):
        d = tmp_path / f"o{k}"
        config.write_run_files(d, cfg, "train", {"labels": tmp_path / "in.txt", "none": None})
        outs.append(((d / config.RESOLVED_NAME).read_bytes(), (d / config.MANIFEST_NAME).read_bytes()))
    assert outs[0] == outs[1]
    man = json.loads(outs[0][1])
    assert man["config_sha256"] == cfg.digest() and man["seed"] == 0
    assert len(man["inputs"]["labels"]["sha256"]) == 64 and "none" not in man["inputs"]
    assert set(man["versions"]) == {"hypoxmil", "python", "numpy", "scipy", "Pillow"}
