import pytest

from conftest import SMALL_CONFIG
from trailgate.config import PipelineConfig, coerce, load_config, parse_config_text, valid_keys
from trailgate.errors import ConfigError


def test_defaults():
    c = PipelineConfig()
    assert (c.pcc, PipelineConfig(task="multi").pcc) == (0.7, 0.9)
    assert (c.augment_ratio, c.cl_folds, c.forest_n_estimators) == (1.0, 10, 300)
    assert (c.stage1_rule, c.stage2_rule, c.dma_threshold) == ("dma", "peak", 0.005)
    assert (c.net_lr, c.net_batch_size, c.net_epochs) == (0.001, 512, 10)
    assert c.num_classes == 2 and PipelineConfig(task="multi").num_classes == 5


@pytest.mark.parametrize("changes", [
    {"task": "ternary"}, {"pcc_threshold": 0.0}, {"pcc_threshold": 1.5}, {"augment_ratio": 0},
    {"stage1_rule": "elbow"}, {"cl_folds": 1},
])
def test_invalid_values(changes):
    with pytest.raises(ConfigError):
        PipelineConfig(**changes)


def test_coerce_types_and_unknown_keys():
    assert coerce("forest_n_estimators", " 40 ") == 40
    assert coerce("pcc_threshold", "none") is None
    assert coerce("unknown_as_attack", "yes") is True
    with pytest.raises(ConfigError, match="valid keys: task"):
        coerce("trees", "3")
    with pytest.raises(ConfigError, match="expected int"):
        coerce("net_epochs", "many")


def test_parse_file_and_prefixes():
    text = "# comment\ntask = multi\nmulti.pcc_threshold = 0.85\nnet_epochs = 2  # trailing\n"
    values = parse_config_text(text)
    assert values == {"task": "multi", "pcc_threshold": 0.85, "net_epochs": 2}
    with pytest.raises(ConfigError, match="'binary.pcc_threshold' applies to task 'binary', not 'multi'"):
        parse_config_text("binary.pcc_threshold = 0.7\n", task="multi")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError):
        parse_config_text("weird.key = 1\n")


def test_load_config_layers_overrides_over_file():
    c = load_config(SMALL_CONFIG, task="multi", net_epochs=7)
    assert c.task == "multi" and c.forest_n_estimators == 20 and c.net_epochs == 7
    with pytest.raises(ConfigError):
        load_config(None, bogus=1)


def test_digest_and_dump_round_trip():
    c = load_config(SMALL_CONFIG)
    assert c.digest() == load_config(SMALL_CONFIG).digest()
    assert c.digest() != c.replace(seed=1).digest()
    back = PipelineConfig(**parse_config_text(c.dumps()))
    assert back == c
    assert set(c.to_dict()) == set(valid_keys())


def test_network_configs():
    c = PipelineConfig(task="multi")
    n = c.net_config(12)
    assert (n.seq_len, n.num_classes, n.model_dim, n.heads) == (12, 5, 128, 4)
    small = c.ifs_net_config(3)
    assert (small.embed_dim, small.gru_hidden, small.k_folds) == (16, 32, 1)
    with pytest.raises(ConfigError):
        c.replace(no_such_field=1)
