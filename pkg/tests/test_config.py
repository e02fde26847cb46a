from dataclasses import replace

import pytest

from bbcirl.config import PipelineConfig, apply_overrides, load, loads, parse_override
from bbcirl.errors import ConfigError


def test_defaults():
    cfg = PipelineConfig()
    cfg.validate()
    assert (cfg.forward.episodes, cfg.forward.alpha, cfg.forward.gamma) == (5000, 0.00075, 0.999)
    assert cfg.forward.layer_sizes == cfg.bundle.layer_sizes == (49, 16, 3)
    assert (cfg.bundle.B, cfg.bundle.mode, cfg.bundle.clone_lr, cfg.bundle.clone_epochs) == (15, "disjoint", 0.00075, 2000)
    assert (cfg.beta.layer_sizes, cfg.beta.Z, cfg.beta.F) == ((49, 20, 1), 100, 5000)
    assert (cfg.grid.horizon, cfg.grid.goal, cfg.grid.goal_reward) == (15, 48, 20.0)
    assert (cfg.eval.first_k, cfg.eval.runs) == (50, 10) and len(cfg.beta.seeds) == 10


def test_round_trip(tmp_path):
    cfg = apply_overrides(PipelineConfig(), {"bundle.B": "30", "bundle.independent": "true",
                                             "beta.seeds": "4,5,6", "eval.runs": "3", "forward.alpha": "0.001"})
    assert loads(cfg.dumps()) == cfg
    (tmp_path / "c.txt").write_text("# comment\n\nbundle.B = 30  # trailing\n")
    assert load(tmp_path / "c.txt").bundle.B == 30
    assert load(tmp_path / "c.txt").forward == PipelineConfig().forward


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="bundle.size"):
        loads("bundle.size = 3\n")
    with pytest.raises(ConfigError, match="nosuch.key"):
        apply_overrides(PipelineConfig(), {"nosuch.key": "1"})
    with pytest.raises(ConfigError, match="line 2"):
        loads("bundle.B = 3\nnonsense\n")


@pytest.mark.parametrize("text,key", [("bundle.B = abc", "bundle.B"), ("bundle.B = 0", "bundle.B"),
                                      ("forward.gamma = 1.5", "forward.gamma"),
                                      ("bundle.independent = maybe", "bundle.independent"),
                                      ("beta.gradient_mode = other", "beta.gradient_mode"),
                                      ("beta.layer_sizes = 49,20,2", "beta.layer_sizes"),
                                      ("eval.runs = 11", "eval.runs"),
                                      ("grid.goal_reward = -9", "goal_reward")])
def test_invalid_value_is_named(text, key):
    with pytest.raises(ConfigError, match=key):
        loads(text + "\n")


def test_hash_ignores_out_dir_only():
    cfg = PipelineConfig()
    assert cfg.hash() == replace(cfg, out_dir="elsewhere").hash()
    assert cfg.hash() != apply_overrides(cfg, {"bundle.B": "16"}).hash()
    assert len(cfg.hash()) == 16


def test_with_seed():
    cfg = PipelineConfig().with_seed(3)
    assert cfg.forward.seed == cfg.bundle.seed == 3
    assert (cfg.eval.retrain_seed, cfg.eval.eval_seed) == (1003, 2003)
    assert cfg.beta == PipelineConfig().beta
    assert PipelineConfig().with_seed(3).hash() != PipelineConfig().with_seed(4).hash()


def test_parse_override():
    assert parse_override("bundle.B = 5") == ("bundle.B", "5")
    with pytest.raises(ConfigError):
        parse_override("bundle.B")


def test_derived_specs():
    cfg = PipelineConfig().with_seed(2)
    assert cfg.forward_spec().init_seed == 2 and cfg.forward_spec().head == "softmax"
    assert cfg.beta_spec().head == "linear" and cfg.beta_spec().init_seed == cfg.beta.seeds[0]
    assert cfg.grid_config().horizon == 15
