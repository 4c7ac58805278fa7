import pytest

from latentzero.config import default_config, load_config, parse_config_text
from latentzero.errors import ConfigError


def test_defaults_board_mode():
    cfg = default_config()
    assert cfg.env_mode == "board"
    assert cfg.num_blocks == 3
    assert cfg.num_simulations == 16
    assert cfg.lambda_d == 1.0
    assert cfg.lambda_c == 0.0
    assert cfg.decoder_grad_clip == 0.0
    assert cfg.replay_capacity == 40_000
    assert cfg.lr == 0.1 and cfg.momentum == 0.9 and cfg.weight_decay == 1e-4
    assert cfg.unroll_steps == 5 and cfg.iterations == 300


def test_defaults_pixel_mode():
    cfg = parse_config_text("env_mode = pixel")
    assert cfg.num_blocks == 2
    assert cfg.num_simulations == 18
    assert cfg.lambda_d == 25.0
    assert cfg.lambda_c == 1.0
    assert cfg.decoder_grad_clip == 0.001
    assert cfg.replay_capacity == 1_000_000
    assert cfg.discount == 0.997 and cfg.nstep == 5
    assert cfg.priority_alpha == 1.0 and cfg.priority_beta == 0.4


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("not_a_key = 3")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("iterations = many")


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_comments_and_blanks_ignored():
    cfg = parse_config_text("# a comment\n\nboard_size = 5\nboard_connect = 4\n")
    assert cfg.board_size == 5


def test_mode_default_vs_explicit_override():
    cfg = parse_config_text("env_mode = pixel\nlambda_d = 3.5")
    assert cfg.lambda_d == 3.5
    assert cfg.lambda_c == 1.0  # still mode default


def test_int_list_values():
    cfg = parse_config_text("sweep_simulations = 4, 8,16")
    assert cfg.sweep_simulations == [4, 8, 16]


def test_effective_text_roundtrip():
    cfg = parse_config_text("board_size = 5\nboard_connect = 4\nseed = 9")
    text = cfg.effective_text()
    cfg2 = parse_config_text(text)
    assert cfg2.effective_text() == text
    assert cfg2.board_size == 5 and cfg2.seed == 9


def test_config_hash_stable_and_sensitive():
    a = parse_config_text("seed = 1")
    b = parse_config_text("seed = 1")
    c = parse_config_text("seed = 2")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()


def test_invalid_geometry_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("board_size = 3\nboard_connect = 9")
