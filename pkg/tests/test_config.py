import pytest

from gridcast.config import (
    RunConfig,
    apply_overrides,
    load_run_config,
    parse_run_config,
    save_run_config,
    serialize_run_config,
    set_key,
)
from gridcast.errors import ConfigError

SAMPLE = """\
# experiment config
data.path = data/sines.csv
data.split = 7:1:2

model.T = 336
model.F = 96
model.dropout = 0.1
train.lr = 0.0003
train.variate_ratio = 0.5
out.dir = runs/exp1
seed = 42
"""


def test_parse_defaults_from_empty():
    run = parse_run_config("")
    assert run == RunConfig()
    assert run.model_P == 16 and run.train_lr == 1e-4


def test_parse_sample_fields():
    run = parse_run_config(SAMPLE)
    assert run.data_path == "data/sines.csv"
    assert run.data_split == "7:1:2"
    assert run.model_T == 336 and run.model_F == 96
    assert run.model_dropout == 0.1
    assert run.train_lr == 0.0003
    assert run.train_variate_ratio == 0.5
    assert run.out_dir == "runs/exp1"
    assert run.seed == 42


def test_roundtrip_lossless():
    run = parse_run_config(SAMPLE)
    run.train_lr = 1.0 / 3.0  # value with no short decimal form
    again = parse_run_config(serialize_run_config(run))
    assert again == run
    assert parse_run_config(serialize_run_config(again)) == again


def test_roundtrip_via_file(tmp_path):
    run = parse_run_config(SAMPLE)
    path = tmp_path / "run.cfg"
    save_run_config(run, path)
    assert load_run_config(path) == run


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as err:
        parse_run_config("model.width = 7\n")
    assert "model.width" in str(err.value)
    assert "line 1" in str(err.value)


def test_bad_value_type_rejected():
    with pytest.raises(ConfigError) as err:
        parse_run_config("model.T = many\n")
    assert "model.T" in str(err.value)


def test_malformed_line_rejected():
    with pytest.raises(ConfigError) as err:
        parse_run_config("model.T\n")
    assert "line 1" in str(err.value)


def test_bool_parsing():
    for text, expected in [("true", True), ("1", True), ("yes", True), ("false", False), ("0", False), ("no", False)]:
        run = RunConfig()
        set_key(run, "data.borrow_prefix", text)
        assert run.data_borrow_prefix is expected
    with pytest.raises(ConfigError):
        set_key(RunConfig(), "data.borrow_prefix", "maybe")


def test_overrides_apply_in_order():
    run = RunConfig()
    apply_overrides(run, ["train.lr=0.01", "seed=7", "train.lr=0.02"])
    assert run.train_lr == 0.02 and run.seed == 7
    with pytest.raises(ConfigError):
        apply_overrides(run, ["no-equals-sign"])


def test_to_model_config_infers_width():
    run = parse_run_config("model.T = 96\nmodel.F = 24\n")
    cfg = run.to_model_config(5)
    assert cfg.N == 5 and cfg.T == 96 and cfg.F == 24
    with pytest.raises(ConfigError):
        run.to_model_config(None)
    run.model_N = 3
    assert run.to_model_config(None).N == 3


def test_to_model_config_carries_seed():
    run = RunConfig(seed=9, model_N=2)
    assert run.to_model_config().seed == 9


def test_to_hyper_mapping():
    run = parse_run_config("train.lr = 0.005\ntrain.batch_size = 8\ntrain.patience = 2\nseed = 4\n")
    hyper = run.to_hyper(log_path="x.jsonl")
    assert hyper.lr == 0.005 and hyper.batch_size == 8
    assert hyper.patience == 2 and hyper.seed == 4
    assert hyper.log_path == "x.jsonl"


def test_column_lists():
    run = RunConfig()
    assert run.columns("drop") is None
    run.data_drop_columns = "date"
    assert run.columns("drop") == ["date"]
    run.data_value_columns = "0, 2, OT"
    assert run.columns("value") == [0, 2, "OT"]
