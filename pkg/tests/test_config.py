import pytest

from deeplau.config import ConfigError, RunConfig, load_config, parse_config_text


def test_defaults():
    cfg = RunConfig()
    assert (cfg.batch_size, cfg.max_len, cfg.beam_width) == (128, 80, 10)
    assert (cfg.rho, cfg.epsilon, cfg.tau, cfg.init_std, cfg.dropout) == (0.95, 1e-6, 1.0, 0.04, 0.5)
    m = cfg.model_config(100, 200)
    assert m.attn_dim is None and m.hidden_dim == 512 and m.enc_layers == 4


def test_parse_comments_types_and_overrides(tmp_path):
    text = "# a comment\nhidden_dim = 32  # trailing\nresidual = true\n\ndropout=0.25\ncell_kind = gru\n"
    assert parse_config_text(text) == {"hidden_dim": 32, "residual": True, "dropout": 0.25,
                                       "cell_kind": "gru"}
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = load_config(path, {"hidden-dim": "64"})
    assert cfg.hidden_dim == 64 and cfg.residual and cfg.cell_kind == "gru"


def test_round_trip_through_text():
    cfg = RunConfig(hidden_dim=16, residual=True, train_src="a.txt")
    assert RunConfig(**parse_config_text(cfg.to_text())) == cfg


@pytest.mark.parametrize("text", ["bogus_key = 1", "hidden_dim = lots", "residual = maybe",
                                  "just words", "dropout = 1.5", "cell_kind = lstm",
                                  "batch_size = 0"])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        RunConfig(**parse_config_text(text))
