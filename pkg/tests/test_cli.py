import csv
import hashlib
import json
import os
from pathlib import Path

import pytest
import yaml

from gametune.cli import main, read_trace
from gametune.config import load_config, parse_config
from gametune.errors import ConfigError
from gametune.experiments import VARIANTS, metrics_from_trace, parse_variant, summary_from_trace

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "configs" / "demo.yaml"
GOLDEN = Path(__file__).parent / "golden"


def demo_dict():
    return yaml.safe_load(DEMO.read_text())


def write_cfg(tmp_path, d, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return str(p)


QUIET_CFG = {
    "version": 1, "seed": 1, "repeats": 1, "replay_repeats": 10,
    "space": {"shape": [4, 4, 4]},
    "runner": {"kind": "simulator",
               "simulator": {"shared_noise": {"kind": "none"},
                             "landscape": {"seed": 5}}},
    "tournament": {"P": 4, "n_r": 16},
    "baseline": {"subspaces": 4, "outer_budget": 4},
}


# configuration


def test_demo_config_loads():
    exp = load_config(DEMO)
    assert exp.space.size == 512 and exp.is_simulated and exp.repeats == 3
    assert exp.tournament.n_r == 16


@pytest.mark.parametrize("field", ["version", "space", "runner"])
def test_missing_required_field(tmp_path, capsys, field):
    d = demo_dict()
    del d[field]
    assert main(["run", write_cfg(tmp_path, d), "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.update(colour=1), "colour"),
    (lambda d: d.update(version=99), "version"),
    (lambda d: d["tournament"].update(P=1), "tournament"),
    (lambda d: d["tournament"].update(bogus=1), "tournament.bogus"),
    (lambda d: d["runner"].update(kind="cloud"), "runner.kind"),
    (lambda d: d["runner"]["simulator"].update(landscape={"kind": "flat"}),
     "runner.simulator.landscape"),
    (lambda d: d.update(repeats=0), "repeats"),
    (lambda d: d["baseline"].update(kind="bayes"), "baseline.kind"),
    (lambda d: d["compare"].update(methods=["oracle"]), "compare.methods"),
])
def test_invalid_fields_are_named(tmp_path, capsys, mutate, field):
    d = demo_dict()
    mutate(d)
    assert main(["run", write_cfg(tmp_path, d), "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.yaml")]) == 2
    (tmp_path / "bad.yaml").write_text("version: [1\n")
    assert main(["run", str(tmp_path / "bad.yaml")]) == 2


def test_process_config_validates_workload():
    d = {"version": 1, "space": {"parameters": {"units": [1, 2]}},
         "runner": {"kind": "process", "process": {"workload": {"command": "run {nope}"}}}}
    with pytest.raises(ConfigError, match="nope"):
        parse_config(d)


# outputs


def test_run_writes_consistent_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(DEMO), "--out", str(out)]) == 0
    trace = read_trace(out / "trace.jsonl")
    assert trace[0]["type"] == "header" and trace[0]["seed"] == 7
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    rebuilt = metrics_from_trace(trace)
    assert len(rows) == len(rebuilt)
    for row, want in zip(rows, rebuilt):
        assert row == {k: "" if v is None else str(v) for k, v in want.items()}
    summary = json.loads((out / "summary.json").read_text())
    assert summary == json.loads(json.dumps(summary_from_trace(trace, "run")))


def test_game_records_rebuild_ledger(tmp_path):
    out = tmp_path / "o"
    main(["run", str(DEMO), "--out", str(out)])
    trace = read_trace(out / "trace.jsonl")
    for res in (r for r in trace if r["type"] == "result"):
        games = [g for g in trace if g["type"] == "game" and g["repeat"] == res["repeat"]]
        assert sum(g["cost"] for g in games) == pytest.approx(res["core_time"])
        assert len(games) == res["games"]


def test_out_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("GAMETUNE_OUT_DIR", str(tmp_path / "env"))
    assert main(["run", str(DEMO), "--seed", "3"]) == 0
    assert (tmp_path / "env" / "summary.json").exists()
    assert main(["run", str(DEMO), "--seed", "3", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "summary.json").exists()
    monkeypatch.delenv("GAMETUNE_OUT_DIR")
    assert main(["run", str(DEMO), "--seed", "3"]) == 0
    assert (tmp_path / "out" / "demo" / "summary.json").exists()


def test_seed_flag_overrides(tmp_path):
    main(["run", str(DEMO), "--seed", "11", "--out", str(tmp_path / "o")])
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["seed"] == 11


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_golden_demo_summary(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(DEMO), "--out", str(out)]) == 0
    golden = GOLDEN / "demo_run_summary.json"
    digest = GOLDEN / "demo_run_trace.sha256"
    if os.environ.get("GAMETUNE_REGEN_GOLDEN"):
        golden.write_bytes((out / "summary.json").read_bytes())
        digest.write_text(_digest(out / "trace.jsonl") + "\n")
    assert (out / "summary.json").read_bytes() == golden.read_bytes()
    assert _digest(out / "trace.jsonl") == digest.read_text().strip()


@pytest.mark.parametrize("command", ["run", "compare", "ablate"])
def test_outputs_independent_of_parallelism(tmp_path, command):
    for p in ("1", "4"):
        assert main([command, str(DEMO), "--parallelism", p, "--out", str(tmp_path / p)]) == 0
    for name in ("trace.jsonl", "summary.json", "metrics.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "4" / name).read_bytes()


# compare and ablate


def test_compare_zero_noise_all_methods_exact(tmp_path):
    d = dict(QUIET_CFG, tournament={"P": 4, "n_r": 16, "region_consecutive_win_threshold": 1000})
    out = tmp_path / "o"
    assert main(["compare", write_cfg(tmp_path, d), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    for label in ("tournament", "exhaustive-in-noise", "integrated"):
        assert summary["labels"][label]["mean_gap_pct"] == 0.0, label
        assert summary["labels"][label]["mean_cov_pct"] == 0.0


def test_compare_baseline_flags(tmp_path):
    out = tmp_path / "o"
    assert main(["compare", str(DEMO), "--methods", "integrated", "--baseline", "hillclimb",
                 "--subspaces", "4", "--outer-budget", "2", "--out", str(out)]) == 0
    trace = read_trace(out / "trace.jsonl")
    assert trace[0]["baseline"] == {"kind": "hillclimb", "subspaces": 4, "outer_budget": 2}
    res = [r for r in trace if r["type"] == "result"]
    assert all(len(r["evaluations"]) == 2 and r["baseline"] == "hillclimb" for r in res)
    assert main(["compare", str(DEMO), "--methods", "oracle", "--out", str(out)]) == 2
    assert main(["compare", str(DEMO), "--outer-budget", "0", "--out", str(out)]) == 2


def test_ablate_empty_list_runs_full_only(tmp_path):
    out = tmp_path / "o"
    assert main(["ablate", str(DEMO), "--variants", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert list(summary["labels"]) == ["full"]


def test_ablate_no_early_termination_noise_free(tmp_path):
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, QUIET_CFG)
    assert main(["ablate", cfg, "--variants", "no-early-termination", "--out", str(out)]) == 0
    labels = json.loads((out / "summary.json").read_text())["labels"]
    assert labels["no-early-termination"]["winners"] == labels["full"]["winners"]
    assert labels["no-early-termination"]["delta_vs_full"]["mean_core_time"] > 0


def test_unknown_variant(tmp_path, capsys):
    assert main(["ablate", str(DEMO), "--variants", "no-such", "--out", str(tmp_path)]) == 2
    assert "no-barrage" in capsys.readouterr().err


def test_variant_combination():
    assert parse_variant("all-2-player-games+no-early-termination") == {
        "game_size": 2, "early_termination": False}
    assert len(VARIANTS) == 10


# runner failure


def test_runner_failure_exit_code_and_partial_trace(tmp_path, capsys):
    d = {"version": 1, "seed": 0, "replay_repeats": 2,
         "space": {"parameters": {"units": [1, 2, 3, 4]}},
         "runner": {"kind": "process",
                    "process": {"slots": 4, "poll_interval": 0.05,
                                "workload": {"command": ["false"], "grace": 1.0}}},
         "tournament": {"P": 4, "n_r": 1}}
    out = tmp_path / "o"
    assert main(["run", write_cfg(tmp_path, d), "--out", str(out)]) == 3
    trace = read_trace(out / "trace.jsonl")
    assert trace[0]["type"] == "header" and trace[-1]["type"] == "error"
    assert "runner error" in capsys.readouterr().err
