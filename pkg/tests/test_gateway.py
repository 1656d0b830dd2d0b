import json

import pytest
import yaml

from gateway import build_parser, main, overrides_from_args

TINY_CONFIG = """\
workload:
  duration_days: 6
  n_studies: 150
  total_repo_bytes: 2000000000
  n_workstations: 2
  session_rate_per_day: 8.0
  seed: 11
  n_institutions: 2
  history_days: 400
experiment:
  cache_fractions: [0.02, 0.05]
  repetitions: 2
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("LOG_LEVEL", raising=False)
    monkeypatch.delenv("DEBUG", raising=False)
    (tmp_path / "tiny.yaml").write_text(TINY_CONFIG)
    return tmp_path


def generate(out="run", *extra):
    return main(["generate", "--config", "tiny.yaml", "--out", out, *extra])


def simulate(out="run", *extra):
    return main(["simulate", "--config", "tiny.yaml", "--out", out, *extra])


def test_flags_become_dotted_overrides():
    args = build_parser().parse_args(["simulate", "--seed", "3", "--reps", "4", "--cache-sizes", "0.1,0.2",
                                      "--static-rules", "--no-prefetch"])
    overrides = overrides_from_args(args)
    assert overrides["experiment.seed"] == 3
    assert overrides["experiment.repetitions"] == 4
    assert overrides["experiment.cache_fractions"] == "0.1,0.2"
    assert overrides["prefetch.static_rules"] is True
    assert overrides["prefetch.enabled"] is False
    assert overrides["logging.level"] is None

    args = build_parser().parse_args(["generate", "--seed", "5"])
    assert overrides_from_args(args)["workload.seed"] == 5
    assert "prefetch.enabled" not in overrides_from_args(build_parser().parse_args(["simulate"]))


def test_generate_simulate_report(workspace):
    assert generate() == 0
    run = workspace / "run"
    for name in ("trace.jsonl", "index.jsonl", "labels.jsonl", "config.yaml", "gateway.log"):
        assert (run / name).exists(), name

    assert simulate() == 0
    rows = (run / "experiment.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2 * 2
    assert len(json.loads((run / "summary.json").read_text())["cells"]) == 4
    assert len(json.loads((run / "runs.json").read_text())) == 8

    assert main(["report", "--csv", "run/experiment.csv", "--out", "run/report"]) == 0
    for name in ("hit_ratio.csv", "retrieval_time.csv", "comparison.json"):
        assert (run / "report" / name).exists(), name
    comparison = json.loads((run / "report" / "comparison.json").read_text())
    assert comparison["largest_cache_fraction"] == 0.05


def test_simulate_is_reproducible(workspace):
    assert generate() == 0
    assert simulate() == 0
    first = (workspace / "run" / "experiment.csv").read_bytes()
    assert simulate() == 0
    assert (workspace / "run" / "experiment.csv").read_bytes() == first


def test_generate_is_reproducible_and_seeded(workspace):
    assert generate("a") == 0
    assert generate("b") == 0
    assert generate("c", "--seed", "99") == 0
    for name in ("trace.jsonl", "index.jsonl", "labels.jsonl"):
        assert (workspace / "a" / name).read_bytes() == (workspace / "b" / name).read_bytes()
    assert (workspace / "a" / "trace.jsonl").read_bytes() != (workspace / "c" / "trace.jsonl").read_bytes()


def test_baseline_only_with_artifacts(workspace):
    assert generate() == 0
    assert simulate("run", "--no-prefetch", "--cache-sizes", "0.05", "--reps", "1",
                    "--dump-cache", "--message-log", "--checkpoint-dir", "ckpt") == 0
    run = workspace / "run"
    assert {line.split(",")[1] for line in (run / "experiment.csv").read_text().splitlines()[1:]} == {"config1"}
    assert (run / "cache_state.jsonl").exists()
    assert (run / "messages.jsonl").read_text().count("\n") == len((run / "trace.jsonl").read_text().splitlines())
    assert not (run / "training_log.jsonl").exists()
    assert not (workspace / "ckpt").exists()
    assert yaml.safe_load((run / "config.yaml").read_text())["prefetch"]["enabled"] is False


def test_learned_run_checkpoints(workspace):
    assert generate() == 0
    assert simulate("run", "--cache-sizes", "0.05", "--reps", "1", "--checkpoint-dir", "ckpt") == 0
    saved = {p.name for p in (workspace / "ckpt").iterdir()}
    assert "classifier.json" in saved
    assert any(name.startswith("scorer_") for name in saved)


def test_unknown_configuration_key_exits_2(workspace, capsys):
    (workspace / "bad.yaml").write_text("cache:\n  high_watermark: 0.9\n  flavour: lru\n")
    assert main(["generate", "--config", "bad.yaml", "--out", "run"]) == 2
    err = capsys.readouterr().err
    assert "error [configuration]" in err
    assert "cache.flavour" in err and "line 3" in err


def test_missing_trace_exits_3(workspace, capsys):
    assert simulate("empty") == 3
    assert "error [parse]" in capsys.readouterr().err


def test_broken_reference_exits_4(workspace):
    assert generate() == 0
    trace = workspace / "run" / "trace.jsonl"
    lines = trace.read_text().splitlines()
    broken = json.loads(next(line for line in lines if '"uid"' in line))
    broken["uid"] = "S999999"
    trace.write_text("\n".join(lines + [json.dumps(broken)]) + "\n")
    assert simulate() == 4


def test_report_without_table_exits_6(workspace, capsys):
    assert main(["report", "--csv", "nowhere.csv", "--out", "report"]) == 6
    assert "error [report]" in capsys.readouterr().err
