"""Running tournaments inside the subspaces an outer tuner proposes, plus the
sample-one-at-a-time baseline that ignores interference."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .engine import run_solo
from .errors import InvalidArgument
from .simrunner import keyed_rng
from .space import Configuration, SearchSpace, partition_subspaces
from .tournament import CostLedger, TournamentConfig, TournamentReport, run_tournament


class BaselineTuner(Protocol):
    """Outer tuner that sees each subspace as a single configuration.

    ``history`` holds ``(subspace id, observed time)`` pairs; lower is better.
    """

    budget: int

    def propose(self, history: Sequence[tuple[int, float]]) -> int:
        ...

    def done(self, history: Sequence[tuple[int, float]]) -> bool:
        ...


class RandomBaseline:
    """Visits subspaces uniformly at random without replacement."""

    def __init__(self, n_sub: int, seed: int = 0, budget: int | None = None):
        self.n_sub = n_sub
        self.budget = n_sub if budget is None else min(budget, n_sub)
        self.order = [int(i) for i in keyed_rng(seed, "baseline-random").permutation(n_sub)]

    def propose(self, history):
        return self.order[len(history)]

    def done(self, history):
        return len(history) >= self.budget


class HillClimbBaseline:
    """Steps to the best unvisited neighbour of the best subspace seen so far;
    restarts at a random unvisited subspace when the best one has none left."""

    def __init__(self, n_sub: int, seed: int = 0, budget: int | None = None):
        self.n_sub = n_sub
        self.budget = n_sub if budget is None else min(budget, n_sub)
        self.rng = keyed_rng(seed, "baseline-hillclimb")
        self.start = int(self.rng.integers(n_sub))

    def propose(self, history):
        if not history:
            return self.start
        visited = {s for s, _ in history}
        best = min(history, key=lambda h: (h[1], h[0]))[0]
        for nb in (best - 1, best + 1):
            if 0 <= nb < self.n_sub and nb not in visited:
                return nb
        left = [s for s in range(self.n_sub) if s not in visited]
        return int(left[self.rng.integers(len(left))])

    def done(self, history):
        return len(history) >= self.budget or len({s for s, _ in history}) >= self.n_sub


def baseline_random(space: SearchSpace, n_sub: int, seed: int = 0,
                    budget: int | None = None) -> RandomBaseline:
    return RandomBaseline(n_sub, seed, budget)


def baseline_hillclimb(space: SearchSpace, n_sub: int, seed: int = 0,
                       budget: int | None = None) -> HillClimbBaseline:
    return HillClimbBaseline(n_sub, seed, budget)


@dataclass
class SubspaceEvaluation:
    subspace: int
    members: range
    winner: Configuration
    score: float
    cost: float
    report: TournamentReport | None = None

    def to_dict(self) -> dict:
        return {"subspace": self.subspace, "start": self.members.start,
                "stop": self.members.stop, "winner": self.winner.linear_index,
                "score": self.score, "cost": self.cost}


@dataclass
class IntegratedReport:
    winner: Configuration
    evaluations: list[SubspaceEvaluation]
    history: list[tuple[int, float]]
    ledger: CostLedger
    cache_hits: int = 0
    costs: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {"winner": self.winner.linear_index, "ledger": self.ledger.to_dict(),
                "proposals": [s for s, _ in self.history], "cache_hits": self.cache_hits,
                "evaluations": [e.to_dict() for e in self.evaluations]}


def inner_regions(n_r: int, sub_size: int, space_size: int) -> int:
    return min(sub_size, max(2, round(n_r * sub_size / space_size)))


def tune_with_baseline(space: SearchSpace, n_sub: int, baseline: BaselineTuner,
                       inner_cfg: TournamentConfig, runner, parallelism: int = 1
                       ) -> IntegratedReport:
    """Outer tuner proposes subspaces; each is settled by a full tournament whose
    winner's completion time stands in for the subspace. Re-proposed subspaces
    are answered from cache at no cost."""
    if n_sub < 2:
        raise InvalidArgument("need at least two subspaces")
    if baseline.budget < 1:
        raise InvalidArgument("baseline budget must be at least 1")
    parts = partition_subspaces(space, n_sub)
    cache: dict[int, SubspaceEvaluation] = {}
    history: list[tuple[int, float]] = []
    ledger = CostLedger()
    evaluations: list[SubspaceEvaluation] = []
    costs: list[float] = []
    hits = 0
    while not baseline.done(history):
        s = int(baseline.propose(history))
        if not 0 <= s < n_sub:
            raise InvalidArgument(f"baseline proposed subspace {s} outside 0..{n_sub - 1}")
        if s in cache:
            hits += 1
            costs.append(0.0)
            history.append((s, cache[s].score))
            continue
        members = parts.members(s)
        ev = _evaluate_subspace(space, s, members, inner_cfg, runner, space.size, parallelism)
        ledger.merge(ev.report.ledger)
        cache[s] = ev
        evaluations.append(ev)
        costs.append(ev.cost)
        history.append((s, ev.score))
    if not evaluations:
        raise InvalidArgument("baseline finished without proposing anything")
    best = min(evaluations, key=lambda e: (e.score, e.winner.linear_index))
    return IntegratedReport(best.winner, evaluations, history, ledger, hits, costs)


def _evaluate_subspace(space, s, members: range, inner_cfg, runner, space_size, parallelism):
    tag = f"S{s}/"
    if len(members) == 1:
        cfg_one = space.configuration(members.start)
        elapsed = run_solo(cfg_one, runner, f"{tag}solo")
        ledger = CostLedger()
        ledger.add_solo("final", elapsed)
        report = TournamentReport(cfg_one, [], [], [], {}, ledger, ["solo"], inner_cfg.seed)
        return SubspaceEvaluation(s, members, cfg_one, elapsed, elapsed, report)
    cfg = replace(inner_cfg, n_r=inner_regions(inner_cfg.n_r, len(members), space_size))
    report = run_tournament(space, cfg, runner, within=members, tag=tag, parallelism=parallelism)
    score = report.representative_time()
    if score is None:
        score = run_solo(report.winner, runner, f"{tag}representative")
        report.ledger.add_solo("final", score)
    return SubspaceEvaluation(s, members, report.winner, float(score), report.ledger.total,
                              report)


# ----------------------------------------------------------------------------
# noise-unaware sampling


@dataclass
class SamplingReport:
    winner: Configuration
    samples: list[tuple[int, float]]
    cost: float

    def summary(self) -> dict:
        return {"winner": self.winner.linear_index, "samples": len(self.samples),
                "cost": self.cost}


def tune_noise_unaware_baseline(space: SearchSpace, budget: int | None, runner, seed: int = 0,
                                cost_budget: float | None = None,
                                within: range | None = None, tag: str = "U/") -> SamplingReport:
    """Sample configurations one at a time, each alone under whatever
    interference its run happens to meet, and keep the fastest observation.

    Sampling is uniform without replacement and stops after ``budget`` samples
    or once the accumulated core-time reaches ``cost_budget``.
    """
    indices = within if within is not None else range(space.size)
    if budget is None and cost_budget is None:
        raise InvalidArgument("give a sample budget, a cost budget, or both")
    if budget is not None and budget < 1:
        raise InvalidArgument("budget must be at least 1")
    limit = len(indices) if budget is None else min(budget, len(indices))
    order = keyed_rng(seed, "noise-unaware-order").permutation(len(indices))
    samples: list[tuple[int, float]] = []
    cost = 0.0
    for k in range(limit):
        idx = indices[int(order[k])]
        t = run_solo(space.configuration(idx), runner, f"{tag}{k}")
        samples.append((idx, t))
        cost += t
        if cost_budget is not None and cost >= cost_budget:
            break
    best = min(samples, key=lambda s: (s[1], s[0]))[0]
    return SamplingReport(space.configuration(best), samples, cost)


def exhaustive_in_noise(space: SearchSpace, runner, tag: str = "X/") -> SamplingReport:
    """Run every configuration once, alone, and keep the fastest observation."""
    samples = []
    cost = 0.0
    for i in range(space.size):
        t = run_solo(space.configuration(i), runner, f"{tag}{i}")
        samples.append((i, t))
        cost += t
    best = min(samples, key=lambda s: (s[1], s[0]))[0]
    return SamplingReport(space.configuration(best), samples, cost)
