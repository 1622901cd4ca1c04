import json

import numpy as np
import pytest

from duetrl.cli import main
from duetrl.config import (RunConfig, apply_overrides, format_run_config,
                           load_run_config, parse_config_text,
                           run_config_from_dict)
from duetrl.errors import ConfigError
from duetrl.metrics import RunLog

TINY = ["--set", "ppo.num_envs=8", "--set", "ppo.rollout_steps=16",
        "--set", "eval_episodes=2", "--set", "eval_cadence=128"]


# ---------------------------------------------------------------------------
# config parsing

def test_parse_defaults_from_empty_config():
    cfg = run_config_from_dict(parse_config_text(""))
    assert cfg.task == "scratch"
    assert cfg.ppo.clip_eps == 0.31
    assert cfg.sac.target_entropy_scale == 5.0
    assert cfg.disability.strength_multiplier == 1.0
    assert cfg.rewards.scale_waist == 10.0


def test_parse_dotted_sections_and_types():
    text = """
# comment
task = "bedbath"
seeds = [1, 2, 3]
total_steps = 5000
ppo.lr = 0.0005
ppo.anneal_lr = true
disability.strength_multiplier = 0.5
"""
    cfg = run_config_from_dict(parse_config_text(text))
    assert cfg.task == "bedbath"
    assert cfg.seeds == [1, 2, 3]
    assert cfg.seed_list() == [1, 2, 3]
    assert cfg.ppo.lr == 0.0005
    assert cfg.ppo.anneal_lr is True
    assert cfg.disability.strength_multiplier == 0.5


def test_unknown_key_rejected_with_key_name():
    with pytest.raises(ConfigError) as err:
        run_config_from_dict(parse_config_text("ppo.nonsense = 1"))
    assert err.value.key == "ppo.nonsense"
    with pytest.raises(ConfigError) as err:
        run_config_from_dict(parse_config_text("wat = 1"))
    assert err.value.key == "wat"


def test_seed_count_derivation_documented():
    from duetrl.rng import derive_seed
    cfg = RunConfig(seeds=3, base_seed=17)
    assert cfg.seed_list() == [derive_seed(17, i) for i in range(3)]


def test_snapshot_text_roundtrip():
    cfg = RunConfig(task="armassist", seeds=[4, 5])
    cfg = apply_overrides(cfg, ["ppo.num_envs=32", "rewards.sigma=0.2"])
    text = format_run_config(cfg)
    clone = run_config_from_dict(parse_config_text(text))
    assert format_run_config(clone) == text
    assert clone.ppo.num_envs == 32
    assert clone.rewards.sigma == 0.2


# ---------------------------------------------------------------------------
# train command

def test_train_command_artifact_contract(tmp_path):
    out = tmp_path / "run"
    rc = main(["train", "--task", "scratch", "--algo", "ippo", "--seeds", "3",
               "--total-steps", "256", "--output-dir", str(out), *TINY])
    assert rc == 0
    logs = sorted(out.glob("runlog_seed*.csv"))
    ckpts = sorted(out.glob("*.ckpt"))
    assert len(logs) == 3          # one log per seed
    assert len(ckpts) == 6         # robot + human per seed
    assert (out / "config.snapshot").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["task"] == "scratch"
    assert len(summary["seeds"]) == 3


def test_output_dir_collision_refused(tmp_path):
    out = tmp_path / "run"
    args = ["train", "--task", "scratch", "--algo", "ippo", "--seeds", "1",
            "--total-steps", "128", "--output-dir", str(out), *TINY]
    assert main(args) == 0
    assert main(args) == 2                     # refuse to overwrite
    assert main(args + ["--force"]) == 0       # unless forced


def test_snapshot_reproduces_runlog(tmp_path):
    out1 = tmp_path / "a"
    assert main(["train", "--task", "scratch", "--algo", "ippo", "--seeds", "1",
                 "--total-steps", "256", "--output-dir", str(out1), *TINY]) == 0
    out2 = tmp_path / "b"
    assert main(["train", "--config", str(out1 / "config.snapshot"),
                 "--output-dir", str(out2)]) == 0

    def strip(path):
        return [{k: v for k, v in row.items() if k != "wallclock_s"}
                for row in RunLog.read_csv(path)]

    log1 = sorted(out1.glob("runlog_seed*.csv"))[0]
    log2 = sorted(out2.glob("runlog_seed*.csv"))[0]
    assert strip(log1) == strip(log2)


def test_invalid_config_exits_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("ppo.bogus = 3\n")
    rc = main(["train", "--config", str(cfg), "--output-dir", str(tmp_path / "o")])
    assert rc == 2


def test_missing_checkpoint_exits_3(tmp_path):
    pop = tmp_path / "pop.json"
    pop.write_text(json.dumps({"entries": [{
        "task": "scratch", "algorithm": "ippo", "setting": 1, "seed": 0,
        "human_checkpoint": str(tmp_path / "missing.ckpt"),
        "robot_checkpoint": str(tmp_path / "missing.ckpt")}]}))
    rc = main(["zsc-eval", "--robot", str(tmp_path / "missing.ckpt"),
               "--population", str(pop)])
    assert rc == 3


# ---------------------------------------------------------------------------
# other subcommands

def test_population_dry_run_full_scale(capsys):
    rc = main(["train-population", "--full-scale", "--dry-run"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["total"] == 434
    assert doc["by_algorithm"]["ippo"]["total"] == 136
    assert doc["by_algorithm"]["mappo"]["total"] == 136
    assert doc["by_algorithm"]["masac"]["total"] == 162
    assert doc["by_task"]["scratch"] == 198


def test_crossplay_command_shape(tmp_path):
    # two tiny real checkpoints and a manifest
    from duetrl.neural import policy_init, save_policy
    entries = []
    for s in range(2):
        robot = policy_init(52, 7, "ppo", np.random.default_rng(s))
        human = policy_init(52, 3, "ppo", np.random.default_rng(10 + s))
        rp, hp = tmp_path / f"r{s}.ckpt", tmp_path / f"h{s}.ckpt"
        save_policy(rp, robot, {"task": "scratch", "algorithm": "ippo",
                                "agent_role": "robot", "disability": {}, "seed": s})
        save_policy(hp, human, {"task": "scratch", "algorithm": "ippo",
                                "agent_role": "human", "disability": {}, "seed": s})
        entries.append({"task": "scratch", "algorithm": "ippo", "setting": 1,
                        "seed": s, "human_checkpoint": str(hp),
                        "robot_checkpoint": str(rp)})
    pop = tmp_path / "pop.json"
    pop.write_text(json.dumps({"entries": entries}))
    out = tmp_path / "xp.json"
    rc = main(["crossplay", "--population", str(pop), "--episodes", "1",
               "--seed", "0", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert len(doc["matrix"]) == 2 and len(doc["matrix"][0]) == 2
    assert sorted(doc["permutation"]) == [0, 1]
    assert doc["episodes_per_cell"] == 1


def test_bench_command(tmp_path):
    out = tmp_path / "bench.csv"
    args = ["bench", "--task", "scratch", "--envs", "1,8",
            "--steps-per-point", "32", "--out", str(out)]
    rc = main(args)
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    # single-file outputs follow the same collision rule as directories
    assert main(args) == 2
    assert main(args + ["--force"]) == 0


def test_sweep_command(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({
        "task": "scratch", "algorithm": "ippo", "total_steps": 256,
        "seeds": 1, "eval_cadence": 128,
        "grid": {"ppo.lr": [1e-3, 5e-4], "ppo.num_envs": [8],
                 "ppo.rollout_steps": [16]},
    }))
    out = tmp_path / "sweep"
    rc = main(["sweep", "--grid", str(grid), "--output-dir", str(out)])
    assert rc == 0
    rows = (out / "sweep_results.csv").read_text().splitlines()
    assert rows[0].startswith("rank,auc")
    assert len(rows) == 3   # header + 2 settings


def test_report_data_bundles(tmp_path):
    src = tmp_path / "runs"
    src.mkdir()
    (src / "runlog_seed0.csv").write_text("run_id,task\n")
    (src / "summary.json").write_text("{}")
    out = tmp_path / "bundle"
    rc = main(["report-data", "--runs", str(src), "--out", str(out)])
    assert rc == 0
    assert (out / "runlog_seed0.csv").exists()
    assert (out / "summary.json").exists()
    assert (out / "obs_manifest.json").exists()
