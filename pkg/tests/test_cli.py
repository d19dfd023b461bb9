import json

from evade_planner.cli import build_parser, collect_overrides, main
from tools.metrics_store import MetricsStore
from tools.trace_store import save_layout

FAST = ["--agents", "1", "--horizon", "2", "--budget", "4", "--episodes", "2", "--runs", "1",
        "--no-progress", "--log-level", "WARNING"]


def _write_config(tmp_path, **extra):
    document = {
        "factory": {"episode_length": 3},
        "trainer": {"minibatch_size": 2, "replay_capacity": 20, "warmup_samples": 4, "target_sync_period": 5},
    }
    document.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)


def test_horizon_zero_is_usage_error(capsys):
    assert main(["run", "--horizon", "0"]) == 2
    assert "horizon" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert main(["run", "--bogus"]) == 2
    assert main(["run", "--evade", "maybe"]) == 2


def test_experiment_configurations_parse():
    parser = build_parser()
    evade = collect_overrides(parser.parse_args(
        ["run", "--algo", "dice", "--agents", "4", "--horizon", "4", "--budget", "192", "--evade", "on"]))
    assert evade == {"algorithm": "dice", "horizon": 4, "budget": 192, "evade_enabled": True,
                     "factory": {"agent_count": 4}}
    baseline = collect_overrides(parser.parse_args(["run", "--evade", "off", "--budget", "512", "--horizon", "4"]))
    assert baseline == {"evade_enabled": False, "budget": 512, "horizon": 4}


def test_budget_smaller_than_horizon_is_runtime_error(tmp_path, capsys):
    code = main(["run", "--horizon", "4", "--budget", "3", "--out", str(tmp_path), "--log-level", "WARNING"])
    assert code == 1
    assert "错误:" in capsys.readouterr().err


def test_run_command(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--config", _write_config(tmp_path), "--evade", "off", "--seed", "7",
                 "--out", str(out)] + FAST)
    assert code == 0
    header, records = MetricsStore(str(out)).load_episodes()
    assert header["master_seed"] == 7 and header["evade_enabled"] is False
    assert len(records) == 2
    assert "完成率" in capsys.readouterr().out


def test_yaml_config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("algorithm: doolp\nfactory:\n  episode_length: 2\n", encoding="utf-8")
    out = tmp_path / "yaml"
    assert main(["run", "--config", str(path), "--evade", "off", "--out", str(out)] + FAST) == 0
    header, _ = MetricsStore(str(out)).load_episodes()
    assert header["algorithm"] == "doolp"


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert "错误" in capsys.readouterr().err


def test_warmup_then_run(tmp_path):
    config = _write_config(tmp_path)
    replay = tmp_path / "replay.npz"
    assert main(["warmup", "--config", config, "--output", str(replay), "--samples", "4"] + FAST) == 0
    assert replay.exists()
    out = tmp_path / "evade"
    assert main(["run", "--config", config, "--warmup-replay", str(replay), "--out", str(out)] + FAST) == 0
    assert (out / "checkpoint_run0.npz").exists()


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--net", "desk", "--log-level", "WARNING"]) == 0
    assert "梯度检查通过" in capsys.readouterr().out


def test_oracle_command(capsys):
    assert main(["oracle", "--states", "3", "--actions", "2", "--gamma", "0.9", "--log-level", "WARNING"]) == 0
    output = capsys.readouterr().out
    assert "gamma = 0.9" in output
    assert output.count("\n") >= 5


def test_layout_command(tmp_path, capsys):
    saved = tmp_path / "layout.txt"
    assert main(["layout", "--reach", "2,2", "--horizon", "2", "--agents", "2",
                 "--save", str(saved), "--log-level", "WARNING"]) == 0
    output = capsys.readouterr().out
    assert "13" in output
    assert "1,296" in output
    assert saved.exists()
    assert main(["layout", "--reach", "2"]) == 2


def test_layout_file_flag(tmp_path, capsys):
    cells = list(reversed(range(15))) + list(range(10))
    path = str(tmp_path / "layout.txt")
    save_layout(path, cells)
    assert main(["layout", "--layout-file", path, "--log-level", "WARNING"]) == 0
    first_row = capsys.readouterr().out.splitlines()[0]
    assert first_row.split() == ["14", "13", "12", "11", "10"]


def test_compare_command(tmp_path, capsys):
    for name, rate in (("a", 0.25), ("b", 0.5)):
        store = MetricsStore(str(tmp_path / name))
        store.start({})
        store.append_episode({"run": 0, "episode": 0, "completion_rate": rate, "final_score": 0.0})
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == 0
    assert "+0.250" in capsys.readouterr().out
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "missing")]) == 1


def test_campaign_command(tmp_path):
    config = _write_config(tmp_path, factory={"episode_length": 1})
    out = tmp_path / "campaign"
    assert main(["campaign", "--kind", "horizon", "--config", config, "--out", str(out)] + FAST) == 0
    assert (out / "campaign_table.txt").exists()
    assert sorted(p.name for p in out.iterdir() if p.is_dir()) == ["baseline_h6", "evade_h2", "evade_h4", "evade_h6"]


def test_paper_net_name_is_accepted(capsys):
    args = build_parser().parse_args(["run", "--net", "paper"])
    assert collect_overrides(args) == {"net": "paper"}
    assert main(["gradcheck", "--net", "paper", "--tolerance", "1e-3", "--log-level", "WARNING"]) == 0
    output = capsys.readouterr().out
    assert "full" in output
    assert "梯度检查通过" in output
