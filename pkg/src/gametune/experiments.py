"""Pipelines behind the CLI: single runs, method comparisons and ablations.

Every pipeline returns trace records (JSON-serialisable dicts). The metrics
table is always derived from those records by :func:`metrics_from_trace`, so
it can be rebuilt from the trace file alone.
"""
from __future__ import annotations

import dataclasses
import logging
import statistics
from typing import Iterable, Sequence

from .config import METHODS, ExperimentConfig
from .engine import run_solo
from .errors import InvalidArgument, RefusedEnumeration
from .integrate import (HillClimbBaseline, RandomBaseline, exhaustive_in_noise,
                        tune_noise_unaware_baseline, tune_with_baseline)
from .simrunner import SimRunner, replay_variability, true_optimum
from .space import Configuration
from .tournament import TournamentConfig, run_tournament

log = logging.getLogger(__name__)

METRICS_HEADER = ("table", "label", "repeat", "winner", "winner_base_time", "gap_pct",
                  "cov_pct", "core_time", "games")

# ablation name -> TournamentConfig overrides
VARIANTS: dict[str, dict] = {
    "no-regional": {"regional": False},
    "one-win-regional": {"region_consecutive_win_threshold": 1},
    "no-swiss": {"swiss": False},
    "no-global": {"global_phase": False},
    "no-double-elimination": {"double_elimination": False},
    "no-barrage": {"barrage": False},
    "no-consistency-score": {"use_consistency": False},
    "no-exec-score": {"use_exec_score": False},
    "all-2-player-games": {"game_size": 2},
    "no-early-termination": {"early_termination": False},
}


def parse_variant(name: str) -> dict:
    """``a+b`` combines variants; unknown names raise with the valid list."""
    overrides: dict = {}
    for part in name.split("+"):
        part = part.strip()
        if part not in VARIANTS:
            raise InvalidArgument(
                f"unknown variant {part!r}; valid: {', '.join(sorted(VARIANTS))}")
        overrides.update(VARIANTS[part])
    return overrides


def apply_variant(cfg: TournamentConfig, name: str) -> TournamentConfig:
    if name == "full":
        return cfg
    return dataclasses.replace(cfg, **parse_variant(name))


# ----------------------------------------------------------------------------
# per-winner measurements


class Oracle:
    """Ground truth for the simulator; empty when the space is too large or real."""

    def __init__(self, exp: ExperimentConfig):
        self.exp = exp
        self.best = None
        if exp.is_simulated:
            try:
                _, self.best = true_optimum(exp.model(0))
            except RefusedEnumeration:
                log.warning("space too large for the oracle; gaps will be omitted")

    def base_time(self, idx: int) -> float | None:
        if not self.exp.is_simulated:
            return None
        return float(self.exp.model(0).base_time(idx))

    def gap_pct(self, idx: int) -> float | None:
        if self.best is None:
            return None
        return 100.0 * (self.base_time(idx) / self.best - 1.0)


def winner_cov(exp: ExperimentConfig, runner, winner: Configuration, tag: str) -> float | None:
    """Coefficient of variation (percent) of the winner over replay repeats."""
    if isinstance(runner, SimRunner):
        _, cov = replay_variability(runner.model, winner, exp.replay_repeats)
        return 100.0 * cov
    times = [run_solo(winner, runner, f"{tag}replay{r}") for r in range(exp.replay_repeats)]
    return 100.0 * statistics.stdev(times) / statistics.fmean(times)


def _result(table: str, label: str, repeat: int, winner: Configuration, oracle: Oracle,
            cov, core_time: float, games: int, **extra) -> dict:
    return {"type": "result", "table": table, "label": label, "repeat": repeat,
            "winner": winner.linear_index, "winner_indices": list(winner.indices),
            "winner_base_time": oracle.base_time(winner.linear_index),
            "gap_pct": oracle.gap_pct(winner.linear_index), "cov_pct": cov,
            "core_time": core_time, "games": games, **extra}


def _game_records(report, **labels) -> list[dict]:
    return [{**rec, **labels} for rec in report.records()]


# ----------------------------------------------------------------------------
# pipelines


def noise_seed(exp: ExperimentConfig, repeat: int) -> int:
    """Repeat ``k`` keeps the tournament schedule seed and moves the noise stream."""
    return exp.seed + repeat


def run_pipeline(exp: ExperimentConfig, parallelism: int = 1, variant: str = "full",
                 table: str = "run", records: list[dict] | None = None) -> list[dict]:
    """Pipelines append to ``records`` as they go so a failure leaves a partial trace."""
    oracle = Oracle(exp)
    records = [] if records is None else records
    cfg = apply_variant(exp.tournament_config(exp.seed), variant)
    for k in range(exp.repeats):
        runner = exp.runner(noise_seed(exp, k))
        report = run_tournament(exp.space, cfg, runner, parallelism=parallelism)
        records += _game_records(report, table=table, label=variant, repeat=k)
        cov = winner_cov(exp, runner, report.winner, f"{table}/{variant}/{k}/")
        records.append(_result(table, variant, k, report.winner, oracle, cov,
                               report.ledger.total, report.ledger.games,
                               ledger=report.ledger.to_dict(), flags=report.flags))
    return records


def compare_pipeline(exp: ExperimentConfig, methods: Sequence[str] | None = None,
                     parallelism: int = 1, records: list[dict] | None = None) -> list[dict]:
    """Every method at the tournament's core-time budget (exhaustive runs everything)."""
    if not exp.is_simulated:
        raise InvalidArgument("compare needs the simulator runner (the oracle is required)")
    methods = tuple(methods or exp.methods)
    for m in methods:
        if m not in METHODS:
            raise InvalidArgument(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    oracle = Oracle(exp)
    cfg = exp.tournament_config(exp.seed)
    records = [] if records is None else records
    for k in range(exp.repeats):
        seed = noise_seed(exp, k)
        runner = exp.runner(seed)
        report = run_tournament(exp.space, cfg, runner, parallelism=parallelism)
        budget = report.ledger.total
        for m in methods:
            if m == "tournament":
                records += _game_records(report, table="compare", label=m, repeat=k)
                records.append(_result("compare", m, k, report.winner, oracle,
                                       winner_cov(exp, runner, report.winner, ""),
                                       budget, report.ledger.games))
            elif m == "noise-unaware":
                s = tune_noise_unaware_baseline(exp.space, None, runner, seed=exp.seed,
                                                cost_budget=budget)
                records.append(_result("compare", m, k, s.winner, oracle,
                                       winner_cov(exp, runner, s.winner, ""), s.cost,
                                       len(s.samples), samples=len(s.samples)))
            elif m == "exhaustive-in-noise":
                s = exhaustive_in_noise(exp.space, runner)
                records.append(_result("compare", m, k, s.winner, oracle,
                                       winner_cov(exp, runner, s.winner, ""), s.cost,
                                       len(s.samples), samples=len(s.samples)))
            elif m == "integrated":
                kind = HillClimbBaseline if exp.baseline == "hillclimb" else RandomBaseline
                outer = kind(exp.subspaces, seed=exp.seed, budget=exp.outer_budget)
                ir = tune_with_baseline(exp.space, exp.subspaces, outer, cfg, runner,
                                        parallelism)
                # the per-subspace evaluations double as the run's evaluation cache
                records.append(_result("compare", m, k, ir.winner, oracle,
                                       winner_cov(exp, runner, ir.winner, ""),
                                       ir.ledger.total, ir.ledger.games,
                                       baseline=exp.baseline,
                                       subspaces=[s for s, _ in ir.history],
                                       evaluations=[e.to_dict() for e in ir.evaluations]))
    return records


def ablate_pipeline(exp: ExperimentConfig, variants: Iterable[str] | None = None,
                    parallelism: int = 1, records: list[dict] | None = None) -> list[dict]:
    variants = list(exp.variants if variants is None else variants)
    for v in variants:
        parse_variant(v)
    records = [] if records is None else records
    for v in ["full"] + [v for v in variants if v != "full"]:
        run_pipeline(exp, parallelism, variant=v, table="ablate", records=records)
    return records


# ----------------------------------------------------------------------------
# tables derived from the trace


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return statistics.fmean(xs) if xs else None


def metrics_from_trace(records: Iterable[dict]) -> list[dict]:
    """One row per result record, plus one ``mean`` row per label."""
    results = [r for r in records if r.get("type") == "result"]
    rows = [{k: r.get(k) for k in METRICS_HEADER} for r in results]
    labels: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        labels.setdefault((r["table"], r["label"]), []).append(r)
    for (table, label), group in labels.items():
        winners = {g["winner"] for g in group}
        rows.append({"table": table, "label": label, "repeat": "mean",
                     "winner": f"{len(winners)} distinct",
                     "winner_base_time": _mean(g["winner_base_time"] for g in group),
                     "gap_pct": _mean(g["gap_pct"] for g in group),
                     "cov_pct": _mean(g["cov_pct"] for g in group),
                     "core_time": _mean(g["core_time"] for g in group),
                     "games": _mean(g["games"] for g in group)})
    return rows


def summary_from_trace(records: Sequence[dict], command: str) -> dict:
    """Aggregate view written to summary.json; rebuilt from the trace alone."""
    head = next((r for r in records if r.get("type") == "header"), {})
    rows = [r for r in metrics_from_trace(records) if r["repeat"] == "mean"]
    results = [r for r in records if r.get("type") == "result"]
    out: dict = {"command": command, "seed": head.get("seed"),
                 "config_version": head.get("config_version"), "labels": {}}
    for row in rows:
        group = [r for r in results if r["table"] == row["table"] and r["label"] == row["label"]]
        winners = [r["winner"] for r in group]
        modal = max(set(winners), key=lambda w: (winners.count(w), -w))
        entry = {"mean_gap_pct": row["gap_pct"], "mean_cov_pct": row["cov_pct"],
                 "mean_core_time": row["core_time"], "repeats": len(group),
                 "distinct_winners": len(set(winners)), "modal_winner": modal,
                 "modal_count": winners.count(modal), "winners": winners}
        out["labels"][row["label"]] = entry
    if command == "ablate" and "full" in out["labels"]:
        full = out["labels"]["full"]
        for label, entry in out["labels"].items():
            entry["delta_vs_full"] = {
                key: (None if entry[key] is None or full[key] is None else entry[key] - full[key])
                for key in ("mean_gap_pct", "mean_cov_pct", "mean_core_time")}
    if command == "run":
        run = results[0] if results else {}
        out["winner"] = run.get("winner")
        out["winner_indices"] = run.get("winner_indices")
        out["winner_base_time"] = run.get("winner_base_time")
        out["gap_pct"] = run.get("gap_pct")
        out["cov_pct"] = run.get("cov_pct")
        out["ledger"] = run.get("ledger")
    return out
