from pathlib import Path

import pytest

from cdgnet.config import Config, dump_config, load_config, parse_config
from cdgnet.errors import ConfigError


def test_defaults_follow_the_training_protocol():
    config = load_config(None)
    assert config.channels == 128
    assert config.small_channels == 32
    assert config.reduction_ratio == 8
    assert config.mu == 0.96
    assert config.lambda1 == config.lambda2 == 0.1
    assert config.lr == 1e-4
    assert config.lr_step == 500
    assert config.epochs == 3000
    assert config.batch == 6
    assert config.crop == 256
    assert config.init_seed == config.seed == 0


def test_parse_overrides_and_comments():
    config = parse_config("# toy run\nchannels = 16\nsmall_channels=16  # narrow\n\nseed=4\n")
    assert config.channels == 16
    assert config.small_channels == 16
    assert config.seed == 4
    assert config.init_seed == 4


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError) as info:
        parse_config("channels=16\nwidth=3\n")
    assert info.value.key == "width"
    assert "width" in str(info.value)


def test_duplicate_key_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("seed=1\nseed=2\n")
    assert info.value.key == "seed"


@pytest.mark.parametrize(
    "text, key",
    [
        ("channels=abc", "channels"),
        ("crop=30", None),
        ("lambda1=-1", "lambda1"),
        ("attention=everything", "attention"),
    ],
)
def test_invalid_values(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key


def test_line_without_separator_is_rejected():
    with pytest.raises(ConfigError):
        parse_config("channels 16")


def test_dump_parse_roundtrip():
    config = Config(channels=16, small_channels=8, reduction_ratio=4, attention="channel", lr=3e-4, init_seed=9)
    assert parse_config(dump_config(config)) == config


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_shipped_configs_are_valid():
    root = Path(__file__).resolve().parent.parent / "configs"
    toy = load_config(root / "toy.cfg")
    assert toy.channels == 16
    assert load_config(root / "default.cfg") == Config()


def test_ablation_keys():
    config = parse_config("channels=8\nreduction_ratio=4\nbranches=small\nrec_loss=ssim\n")
    assert config.branches == "small"
    assert config.rec_loss == "ssim"
    assert Config().branches == "both"
    with pytest.raises(ConfigError) as info:
        parse_config("branches=medium\n")
    assert info.value.key == "branches"
