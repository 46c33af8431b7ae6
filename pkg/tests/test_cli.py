import csv
import json

import pytest

from rlmba.cli import main
from rlmba.config import load_config, write_config
from rlmba.files import read_episode_log, strip_timings

SMALL = [
    "data.n_samples=240", "data.n_classes=3", "data.dims=3,4", "al.seed_size=9",
    "al.budget=8", "al.rounds=3", "learner.hidden_dim=6", "learner.epochs=8",
]


def sets(*extra):
    out = []
    for item in list(SMALL) + list(extra):
        out += ["--set", item]
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def last_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: usage: ") and "\n" not in err


def test_bad_arguments(tmp_path, capsys):
    assert main(["nonsense"]) == 1
    assert main(["run", "--set", "al.nope=3", "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.strip().splitlines()[-1].startswith("error: config: ")
    assert main(["baseline", "--strategy", "bald", "--out", str(tmp_path)]) == 1


def test_runtime_failure_exit_code(tmp_path, capsys):
    code = main(["run", *sets("al.rounds=40"), "--reward", "absolute", "--out", str(tmp_path)])
    assert code == 2
    assert capsys.readouterr().err.startswith("error: budget: ")


def test_gen_data_then_run_is_reproducible(tmp_path, capsys):
    assert main(["gen-data", *sets(), "--seed", "4", "--out", str(tmp_path / "d")]) == 0
    path = last_json(capsys)["path"]
    summaries, logs = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        argv = ["run", *sets(f"data.path={path}"), "--seed", "1", "--reward", "absolute", "--out", str(out)]
        assert main(argv) == 0
        summaries.append(last_json(capsys))
        logs.append(strip_timings(read_episode_log(out / "rl-mba.jsonl")))
    assert summaries[0] == summaries[1]
    assert logs[0] == logs[1]


def test_config_file_round_trip(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    write_config(cfg, load_config(overrides=SMALL + ["reward.mode=absolute"]))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert last_json(capsys)["reward_mode"] == "absolute"
    assert load_config(tmp_path / "o" / "config.cfg") == load_config(cfg)


@pytest.fixture(scope="module")
def episode_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("episodes")
    assert main(["baseline", *sets(), "--strategy", "random", "--out", str(out)]) == 0
    assert main(["run", *sets(), "--curve", str(out / "random.csv"), "--out", str(out)]) == 0
    return out


def test_plot_data_tables_and_figures(episode_dir, tmp_path, capsys):
    logs = [str(episode_dir / "rl-mba.jsonl"), str(episode_dir / "random.jsonl")]
    assert main(["plot-data", *logs, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "accuracy.csv")
    for strategy in ("rl-mba", "random"):
        assert [r["round"] for r in rows if r["strategy"] == strategy] == ["1", "2", "3"]
    phi = read_csv(tmp_path / "phi.csv")
    assert len(phi) == 2 * 3 * 2
    rewards = read_csv(tmp_path / "rewards.csv")
    assert [r["mode"] for r in rewards] == ["relative"] * 3
    for name in ("accuracy", "phi", "rewards"):
        assert (tmp_path / f"{name}.png").stat().st_size > 0


def test_plot_data_without_figures(episode_dir, tmp_path):
    assert main(["plot-data", str(episode_dir / "random.jsonl"), "--out", str(tmp_path), "--no-figures"]) == 0
    assert not list(tmp_path.glob("*.png"))
    assert not (tmp_path / "rewards.csv").exists()


def test_analyze_trajectories(episode_dir, tmp_path, capsys):
    assert main(["analyze", str(episode_dir / "rl-mba.jsonl"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "trajectories.csv")
    assert len(rows) == 3
    assert {"w_0", "w_1", "phi_0", "phi_1", "delta_0"} <= set(rows[0])


def test_analyze_ignores_unknown_and_missing_fields(tmp_path, capsys):
    log = tmp_path / "odd.jsonl"
    records = [
        {"type": "round", "round": 1, "w": [0.4, 0.6], "future_field": {"x": 1}},
        {"type": "round", "round": 2, "g": {"top1": 0.5}, "phi": [0.1, 0.2, 0.3]},
        {"type": "annotation", "text": "hello"},
        {"type": "summary", "strategy": "rl-mba", "new_key": [1, 2]},
    ]
    log.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    assert main(["analyze", str(log)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split(",")[:2] == ["round", "top1"]
    assert len(lines) == 3
    assert main(["plot-data", str(log), "--out", str(tmp_path / "p")]) == 0


def test_writes_only_inside_out(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "only"
    assert main(["baseline", *sets(), "--strategy", "entropy", "--out", str(out)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["only"]
