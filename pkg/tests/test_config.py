import pytest

from config import DEFAULT_CACHE_FRACTIONS, Config, NetworkModel
from errors import ConfigurationError


@pytest.fixture(autouse=True)
def clean_env(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("LOG_LEVEL", raising=False)
    monkeypatch.delenv("DEBUG", raising=False)


def test_defaults_are_valid():
    cfg = Config()
    assert cfg.experiment.cache_fractions == DEFAULT_CACHE_FRACTIONS
    assert cfg.sensors.idle_threshold == 0.3
    assert cfg.prefetch.top_k == 2
    assert cfg.patterns.mlp.hidden_sizes == (16,)


def test_unknown_key_names_key_and_line(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("cache:\n  high_watermark: 0.9\n  lo_watermark: 0.5\n")
    with pytest.raises(ConfigurationError) as excinfo:
        Config(path)
    assert excinfo.value.key == "cache.lo_watermark"
    assert excinfo.value.line == 3
    assert "line 3" in str(excinfo.value)


def test_unknown_section_is_rejected(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("cache: {}\nplugins:\n  x: 1\n")
    with pytest.raises(ConfigurationError) as excinfo:
        Config(path)
    assert excinfo.value.key == "plugins"
    assert excinfo.value.line == 2


def test_type_errors_name_the_key(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("experiment:\n  repetitions: many\n")
    with pytest.raises(ConfigurationError, match="experiment.repetitions"):
        Config(path)


def test_nested_mlp_block(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("patterns:\n  mlp:\n    hidden_sizes: [8, 4]\n    epochs: 2\n")
    cfg = Config(path)
    assert cfg.patterns.mlp.hidden_sizes == (8, 4)
    assert cfg.patterns.mlp.epochs == 2
    assert cfg.prefetch.mlp.hidden_sizes == (16,)


def test_watermarks_are_ordered(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("cache:\n  high_watermark: 0.5\n  low_watermark: 0.7\n")
    with pytest.raises(ConfigurationError, match="low_watermark"):
        Config(path)


def test_class_mix_must_sum_to_one():
    with pytest.raises(ConfigurationError, match="class_mix"):
        Config(overrides={"workload.class_mix": [0.5, 0.5, 0.5, 0.0]})


def test_flags_override_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("experiment:\n  repetitions: 3\n  seed: 1\n")
    cfg = Config(path, overrides={"experiment.repetitions": 5, "experiment.seed": None,
                                  "experiment.cache_fractions": "0.01,0.05"})
    assert cfg.experiment.repetitions == 5
    assert cfg.experiment.seed == 1
    assert cfg.experiment.cache_fractions == (0.01, 0.05)


def test_environment_sets_log_level(monkeypatch):
    monkeypatch.setenv("LOG_LEVEL", "DEBUG")
    assert Config().logging.level == "DEBUG"


def test_dump_reloads_to_the_same_configuration(tmp_path):
    cfg = Config(overrides={"workload.n_studies": 321, "prefetch.scorer_training_period_days": 7})
    path = cfg.dump(tmp_path / "out" / "config.yaml")
    assert Config(path).to_dict() == cfg.to_dict()


def test_scorer_training_period_is_daily_or_weekly():
    with pytest.raises(ConfigurationError):
        Config(overrides={"prefetch.scorer_training_period_days": 3})


def test_sim_config_labels():
    cfg = Config()
    assert cfg.sim_config(10, False).label == "config1"
    assert cfg.sim_config(10, True).label == "config2"
    assert cfg.sim_config(10, False, static_rules=True).label == "static"
    with pytest.raises(ConfigurationError):
        cfg.sim_config(10, True, static_rules=True)


def test_sim_config_copies_blocks():
    cfg = Config()
    sim = cfg.sim_config(10, True, seed=3)
    sim.prefetch.mlp.epochs = 99
    assert cfg.prefetch.mlp.epochs != 99
    assert sim.seed == 3


def test_network_model_times():
    net = NetworkModel(wan_bandwidth_bytes_per_s=1000.0, wan_rtt_s=0.5,
                       lan_bandwidth_bytes_per_s=10000.0, lan_overhead_s=0.1)
    assert net.wan_time(2000) == pytest.approx(2.5)
    assert net.lan_time(2000) == pytest.approx(0.3)
