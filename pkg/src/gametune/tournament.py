"""Multi-phase tournament: regional Swiss rounds, a double-elimination global
phase, barrage playoffs and a two-player final.

Every random choice is drawn from a generator keyed by (seed, phase, region or
round), and shared state is only merged at phase and round boundaries, so the
outcome does not depend on how many games run concurrently.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import (NO_EARLY_STOP, GameResult, GameSpec, Player, Runner, StopRule,
                     combined_rank, consistency_score, play_game)
from .errors import InvalidArgument, NoHistory
from .simrunner import keyed_rng
from .space import Configuration, RegionPartition, SearchSpace, partition_regions

PHASES = ("regional", "global", "playoffs", "final")


@dataclass(frozen=True)
class TournamentConfig:
    P: int = 8
    n_r: int = 100
    d: float = 10.0
    min_work_fraction: float = 0.25
    main_bracket_target: int = 3
    region_consecutive_win_threshold: int = 2
    max_regional_rounds: int | None = None
    seed: int = 0
    early_termination: bool = True
    # structural switches, used by ablations
    regional: bool = True
    swiss: bool = True
    regional_companions: bool = True
    global_phase: bool = True
    double_elimination: bool = True
    barrage: bool = True
    use_exec_score: bool = True
    use_consistency: bool = True
    game_size: int | None = None

    def __post_init__(self):
        if self.P < 2:
            raise InvalidArgument("P must be at least 2")
        if self.n_r < 1:
            raise InvalidArgument("n_r must be at least 1")
        if self.main_bracket_target < 2:
            raise InvalidArgument("main_bracket_target must be at least 2")
        if not 0 < self.d < 100:
            raise InvalidArgument("d must lie in (0, 100)")
        if self.region_consecutive_win_threshold < 1:
            raise InvalidArgument("region_consecutive_win_threshold must be at least 1")
        if self.game_size is not None and self.game_size < 2:
            raise InvalidArgument("game_size must be at least 2")
        if not (self.use_exec_score or self.use_consistency):
            raise InvalidArgument("at least one of execution and consistency score is needed")

    @property
    def stop(self) -> StopRule:
        return StopRule(self.early_termination, self.d, self.min_work_fraction)

    @property
    def max_game_size(self) -> int:
        return self.P if self.game_size is None else min(self.P, self.game_size)

    def regional_round_cap(self, region_size: int) -> int:
        if self.max_regional_rounds is not None:
            return self.max_regional_rounds
        return 4 * math.ceil(region_size / self.P)


@dataclass
class CostLedger:
    by_phase: dict[str, float] = field(default_factory=lambda: {p: 0.0 for p in PHASES})
    games_by_phase: dict[str, int] = field(default_factory=lambda: {p: 0 for p in PHASES})
    savings: float = 0.0
    games: int = 0

    def add(self, result: GameResult) -> None:
        phase = result.phase or "other"
        self.by_phase[phase] = self.by_phase.get(phase, 0.0) + result.cost
        self.games_by_phase[phase] = self.games_by_phase.get(phase, 0) + 1
        self.savings += result.savings_estimate
        self.games += 1

    def add_solo(self, phase: str, elapsed: float) -> None:
        self.by_phase[phase] = self.by_phase.get(phase, 0.0) + elapsed
        self.games_by_phase[phase] = self.games_by_phase.get(phase, 0) + 1
        self.games += 1

    def merge(self, other: "CostLedger") -> None:
        for k, v in other.by_phase.items():
            self.by_phase[k] = self.by_phase.get(k, 0.0) + v
        for k, v in other.games_by_phase.items():
            self.games_by_phase[k] = self.games_by_phase.get(k, 0) + v
        self.savings += other.savings
        self.games += other.games

    @property
    def total(self) -> float:
        return sum(self.by_phase.values())

    def to_dict(self) -> dict:
        return {"total": self.total, "by_phase": dict(self.by_phase),
                "games_by_phase": dict(self.games_by_phase), "games": self.games,
                "early_termination_savings": self.savings}


# ----------------------------------------------------------------------------
# traces


@dataclass
class RegionTrace:
    region: int
    size: int
    rounds: int
    path: str
    played: list[int]
    winners: list[int]
    leader: int
    best_scores: dict[int, float]
    game_ids: list[str]

    def to_dict(self) -> dict:
        return {"region": self.region, "size": self.size, "rounds": self.rounds,
                "path": self.path, "played": self.played, "winners": self.winners,
                "leader": self.leader,
                "best_scores": {str(k): v for k, v in self.best_scores.items()},
                "game_ids": self.game_ids}


@dataclass
class BracketState:
    entering: int
    main: list[Player]
    loser: list[Player] = field(default_factory=list)
    eliminated: list[Player] = field(default_factory=list)
    advanced: list[Player] = field(default_factory=list)
    round: int = 0
    wild_card: Player | None = None

    def snapshot(self, label: str) -> dict:
        ids = lambda ps: [p.linear_index for p in ps]  # noqa: E731
        return {"round": self.round, "label": label, "entering": self.entering,
                "main": ids(self.main), "loser": ids(self.loser),
                "eliminated": ids(self.eliminated), "advanced": ids(self.advanced),
                "wild_card": self.wild_card.linear_index if self.wild_card else None}


@dataclass
class TournamentReport:
    winner: Configuration
    games: list[GameResult]
    regions: list[RegionTrace]
    bracket: list[dict]
    playoffs: dict
    ledger: CostLedger
    flags: list[str]
    seed: int

    @property
    def winner_index(self) -> int:
        return self.winner.linear_index

    def representative_time(self) -> float | None:
        """Winner's projected completion time in the last game it played."""
        for g in reversed(self.games):
            if self.winner_index in g.players:
                pos = g.players.index(self.winner_index)
                frac = g.work_fractions[pos]
                if frac > 0:
                    return g.elapsed / frac
        return None

    def summary(self) -> dict:
        return {"winner": self.winner_index, "winner_indices": list(self.winner.indices),
                "ledger": self.ledger.to_dict(), "flags": list(self.flags),
                "playoffs": self.playoffs, "games": len(self.games),
                "regions": len(self.regions),
                "global_rounds": max((b["round"] for b in self.bracket), default=0),
                "representative_time": self.representative_time(), "seed": self.seed}

    def records(self) -> list[dict]:
        out = [{"type": "region", **r.to_dict()} for r in self.regions]
        out += [{"type": "bracket", **b} for b in self.bracket]
        out += [{"type": "game", **g.to_dict()} for g in self.games]
        return out


# ----------------------------------------------------------------------------
# helpers

Judge = Callable[[Sequence[Player], GameResult], int]


def _by_exec(players: Sequence[Player], result: GameResult) -> int:
    return result.winner_pos


def play_group(group: Sequence[Player], base_id: str, phase: str, runner: Runner,
               stop: StopRule, game_size: int, judge: Judge = _by_exec
               ) -> tuple[Player, list[GameResult]]:
    """Play ``group`` as one game, or as a winner-stays ladder of smaller games
    when the group exceeds ``game_size``. Returns the surviving player."""
    group = list(group)
    if len(group) == 1:
        return group[0], []
    if len(group) <= game_size:
        r = play_game(GameSpec(base_id, group, stop, phase), runner)
        return group[judge(group, r)], [r]
    results = []
    current, queue = group[:game_size], group[game_size:]
    k = 0
    while True:
        r = play_game(GameSpec(f"{base_id}.{k}", current, stop, phase), runner)
        results.append(r)
        champion = current[judge(current, r)]
        if not queue:
            return champion, results
        current = [champion] + queue[:game_size - 1]
        queue = queue[game_size - 1:]
        k += 1


def _mean_rank_key(p: Player):
    return (-p.mean_score(), p.linear_index)


def _map(fn, items, parallelism: int):
    if parallelism > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ----------------------------------------------------------------------------
# phase I


@dataclass
class RegionOutcome:
    winners: list[Player]
    trace: RegionTrace
    games: list[GameResult]


def _weighted_pick(rng: np.random.Generator, pool: list[Player], k: int) -> list[Player]:
    weights = np.array([max(p.last_score(), 0.0) for p in pool])
    positive = int((weights > 0).sum())
    k = min(k, positive)
    if k <= 0:
        return []
    picks = rng.choice(len(pool), size=k, replace=False, p=weights / weights.sum())
    return [pool[i] for i in sorted(picks)]


def run_regional(members: Sequence[Player], region: int, cfg: TournamentConfig, runner: Runner,
                 tag: str = "") -> RegionOutcome:
    """Swiss-style rounds inside one region.

    Round 1 draws ``min(P, |region|)`` players at random. Later rounds draw
    ``ceil(P/2)`` unplayed players uniformly and fill the rest from players who
    already have a score, with probability proportional to their latest score.
    Ends when one player has won ``region_consecutive_win_threshold`` rounds,
    when nobody is left unplayed (from round 2 on), or at the round cap.
    """
    members = list(members)
    n = len(members)
    stop = cfg.stop
    size = cfg.max_game_size
    games: list[GameResult] = []
    if n == 0:
        raise InvalidArgument(f"region {region} is empty")
    if n == 1:
        p = members[0]
        trace = RegionTrace(region, 1, 0, "singleton", [], [p.linear_index], p.linear_index,
                            {}, [])
        return RegionOutcome([p], trace, games)

    if not cfg.swiss:
        winner, games = play_group(members, f"{tag}R{region}.1", "regional", runner, stop,
                                   max(size, min(n, runner.capacity)))
        return _close_region(members, region, cfg, games, winner, 1, "single-game")

    rng_new = keyed_rng(cfg.seed, tag + "regional-new", region)
    rng_old = keyed_rng(cfg.seed, tag + "regional-played", region)
    unplayed = list(members)
    played: list[Player] = []
    round_wins: dict[int, int] = {}
    cap = cfg.regional_round_cap(n)
    half = math.ceil(cfg.P / 2)
    rnd = 0
    path = "cap"
    leader = None
    while True:
        rnd += 1
        if rnd == 1:
            k_new, k_old = min(cfg.P, n), 0
        else:
            k_new = min(half, len(unplayed))
            k_old = cfg.P - k_new
        new_pos = sorted(rng_new.choice(len(unplayed), size=k_new, replace=False)) if k_new else []
        new = [unplayed[i] for i in new_pos]
        old = _weighted_pick(rng_old, played, k_old) if k_old else []
        group = new + old
        if len(group) < 2:
            path = "coverage"
            break
        winner, results = play_group(group, f"{tag}R{region}.{rnd}", "regional", runner,
                                     stop, size)
        games.extend(results)
        chosen = {id(p) for p in new}
        unplayed = [p for p in unplayed if id(p) not in chosen]
        played.extend(new)
        round_wins[id(winner)] = round_wins.get(id(winner), 0) + 1
        if round_wins[id(winner)] >= cfg.region_consecutive_win_threshold:
            path, leader = "wins", winner
            break
        if not unplayed and rnd >= 2:
            path = "coverage"
            break
        if rnd >= cap:
            break
    if leader is None:
        leader = min(played, key=lambda p: (-round_wins.get(id(p), 0), -p.mean_score(),
                                            p.linear_index))
    return _close_region(members, region, cfg, games, leader, rnd, path)


def _close_region(members, region, cfg, games, leader, rounds, path) -> RegionOutcome:
    ids = [g.game_id for g in games]
    played = [p for p in members if p.history]
    best = {p.linear_index: p.best_score(ids) for p in played}
    winners = [leader]
    if cfg.regional_companions:
        floor = best[leader.linear_index] - cfg.d / 100.0
        winners += [p for p in played if p is not leader and best[p.linear_index] >= floor]
    winners.sort(key=lambda p: p.linear_index)
    trace = RegionTrace(region, len(members), rounds, path,
                        sorted(best), [p.linear_index for p in winners], leader.linear_index,
                        best, ids)
    return RegionOutcome(winners, trace, games)


# ----------------------------------------------------------------------------
# phase II


def form_diverse_groups(players: Sequence[Player], P: int, region_of: Callable[[Player], int]
                        | None = None, n_groups: int | None = None) -> list[list[Player]]:
    """Split players into groups of at most P, spreading each region across groups.

    With the default group count ``ceil(n/P)`` groups are filled to P in order
    (the last one takes the remainder); a larger ``n_groups`` gives balanced
    sizes. Players are dealt region by region into the first group with room
    that has no member of the same region, falling back to any group with room.
    """
    players = list(players)
    if not players:
        return []
    region_of = region_of or (lambda p: p.region)
    n = len(players)
    min_groups = math.ceil(n / P)
    if n_groups is None or n_groups <= min_groups:
        n_groups = min_groups
        caps = [P] * (n // P) + ([n % P] if n % P else [])
    else:
        n_groups = min(n_groups, n)
        q, rem = divmod(n, n_groups)
        caps = [q + 1] * rem + [q] * (n_groups - rem)
    buckets: dict[int, list[Player]] = {}
    for p in players:
        buckets.setdefault(region_of(p), []).append(p)
    order = sorted(buckets, key=lambda r: (-len(buckets[r]), r))
    groups: list[list[Player]] = [[] for _ in caps]
    seen: list[set] = [set() for _ in caps]
    for r in order:
        for p in buckets[r]:
            slot = next((g for g in range(len(caps)) if len(groups[g]) < caps[g]
                         and r not in seen[g]), None)
            if slot is None:
                slot = next(g for g in range(len(caps)) if len(groups[g]) < caps[g])
            groups[slot].append(p)
            seen[slot].add(r)
    return groups


def _combined_judge(cfg: TournamentConfig, prior_ids: frozenset) -> Judge:
    def judge(players, result):
        return combined_rank(players, result, prior_ids, cfg.use_exec_score,
                             cfg.use_consistency).winner_pos
    return judge


@dataclass
class GlobalOutcome:
    finalists: list[Player]
    wild_card: Player | None
    games: list[GameResult]
    snapshots: list[dict]
    flags: list[str]


def _safe_consistency(p: Player, ids) -> float:
    try:
        return consistency_score(p, ids)
    except NoHistory:
        return 0.0


def _loser_bracket_seeds(loser: list[Player], global_ids: set, k: int) -> list[Player]:
    """Top-k of the loser bracket by rank sum of mean execution score and consistency."""
    means = {id(p): p.mean_score() for p in loser}
    cons = {id(p): _safe_consistency(p, global_ids) for p in loser}
    by_mean = sorted(loser, key=lambda p: (-means[id(p)], p.linear_index))
    by_cons = sorted(loser, key=lambda p: (-cons[id(p)], -means[id(p)], p.linear_index))
    rank_m = {id(p): i for i, p in enumerate(by_mean, 1)}
    rank_c = {id(p): i for i, p in enumerate(by_cons, 1)}
    ranked = sorted(loser, key=lambda p: (rank_m[id(p)] + rank_c[id(p)], -means[id(p)],
                                          p.linear_index))
    return ranked[:k]


def run_global(winners: Sequence[Player], cfg: TournamentConfig, runner: Runner,
               tag: str = "", parallelism: int = 1) -> GlobalOutcome:
    """Double-elimination rounds down to ``main_bracket_target`` players, then
    one loser-bracket game whose winner takes the wild card."""
    target = cfg.main_bracket_target
    entrants = sorted(winners, key=lambda p: (p.region, p.linear_index))
    state = BracketState(len(entrants), list(entrants))
    snapshots = [state.snapshot("entry")]
    games: list[GameResult] = []
    flags: list[str] = []
    if len(entrants) < target + 1:
        state.advanced, state.main = state.main, []
        snapshots.append(state.snapshot("skipped"))
        return GlobalOutcome(state.advanced, None, games, snapshots, ["global-skipped"])

    stop = cfg.stop
    size = cfg.max_game_size
    global_ids: set[str] = set()
    while len(state.main) > target:
        state.round += 1
        n_groups = max(math.ceil(len(state.main) / cfg.P), target)
        ordered = sorted(state.main, key=lambda p: (p.region, -p.mean_score(), p.linear_index))
        groups = form_diverse_groups(ordered, cfg.P, n_groups=n_groups)
        judge = _combined_judge(cfg, frozenset(global_ids))
        rid = state.round

        def play(item, rid=rid, judge=judge):
            j, group = item
            return play_group(group, f"{tag}G{rid}.{j}", "global", runner, stop, size, judge)

        outcomes = _map(play, list(enumerate(groups)), parallelism)
        new_main = []
        for group, (survivor, results) in zip(groups, outcomes):
            games.extend(results)
            global_ids.update(r.game_id for r in results)
            new_main.append(survivor)
            for p in group:
                if p is survivor:
                    continue
                if cfg.double_elimination:
                    state.loser.append(p)
                else:
                    state.eliminated.append(p)
        state.main = new_main
        snapshots.append(state.snapshot("round"))

    finalists = sorted(state.main, key=_mean_rank_key)
    wild = None
    if cfg.double_elimination and state.loser:
        seeds = _loser_bracket_seeds(state.loser, global_ids, cfg.P)
        wild, results = play_group(seeds, f"{tag}W", "global", runner, stop, size,
                                   _combined_judge(cfg, frozenset(global_ids)))
        games.extend(results)
        if not results:
            flags.append("wild-card-walkover")
    state.round += 1
    state.wild_card = wild
    state.advanced = finalists + ([wild] if wild is not None else [])
    state.eliminated += [p for p in state.loser if p is not wild]
    state.loser = []
    state.main = []
    snapshots.append(state.snapshot("wild-card"))
    return GlobalOutcome(finalists, wild, games, snapshots, flags)


# ----------------------------------------------------------------------------
# phases III and IV


def _duel(a: Player, b: Player, game_id: str, phase: str, cfg: TournamentConfig, runner: Runner,
          allow_duplicates: bool = False) -> tuple[Player, Player, GameResult]:
    stop = replace(NO_EARLY_STOP, d=cfg.d, min_work_fraction=cfg.min_work_fraction)
    r = play_game(GameSpec(game_id, [a, b], stop, phase, allow_duplicates), runner)
    w = r.winner_pos
    return (a, b, r) if w == 0 else (b, a, r)


@dataclass
class PlayoffOutcome:
    finalists: list[Player]
    games: list[GameResult]
    eliminated: list[int]
    flags: list[str]


def run_playoffs(entrants: Sequence[Player], cfg: TournamentConfig, runner: Runner,
                 tag: str = "") -> PlayoffOutcome:
    """Barrage among four players, two at a time, no early termination.

    Seeds are ordered by average execution score. Game 1 pits seeds 1 and 2 and
    its winner is the first finalist; game 2 pits seeds 3 and 4 and its loser
    is out; the game 2 winner then plays the game 1 loser for the second
    final spot.
    """
    seeded = sorted(entrants, key=_mean_rank_key)
    flags: list[str] = []
    eliminated: list[int] = []
    if not cfg.barrage:
        flags.append("barrage-skipped")
        eliminated = [p.linear_index for p in seeded[2:]]
        return PlayoffOutcome(seeded[:2], [], eliminated, flags)
    if len(seeded) > 4:
        flags.append("playoffs-trimmed")
        eliminated = [p.linear_index for p in seeded[4:]]
        seeded = seeded[:4]
    if len(seeded) <= 2:
        if len(seeded) < 2:
            flags.append("final-skipped")
        return PlayoffOutcome(seeded, [], eliminated, flags)
    games = []
    w1, l1, r1 = _duel(seeded[0], seeded[1], f"{tag}P1", "playoffs", cfg, runner)
    games.append(r1)
    if len(seeded) == 3:
        flags.append("playoffs-three")
        challenger = seeded[2]
    else:
        challenger, out, r2 = _duel(seeded[2], seeded[3], f"{tag}P2", "playoffs", cfg, runner)
        games.append(r2)
        eliminated.append(out.linear_index)
    w3, l3, r3 = _duel(challenger, l1, f"{tag}P3", "playoffs", cfg, runner)
    games.append(r3)
    eliminated.append(l3.linear_index)
    return PlayoffOutcome([w1, w3], games, eliminated, flags)


def run_final(finalists: Sequence[Player], cfg: TournamentConfig, runner: Runner,
              tag: str = "", allow_duplicates: bool = False) -> tuple[Player, GameResult]:
    """Single two-player game run to completion; the first to finish wins."""
    if len(finalists) != 2:
        raise InvalidArgument("the final needs exactly two players")
    a, b = finalists
    winner, _, r = _duel(a, b, f"{tag}F", "final", cfg, runner, allow_duplicates)
    return winner, r


# ----------------------------------------------------------------------------
# orchestration


def run_tournament(space: SearchSpace, cfg: TournamentConfig, runner: Runner,
                   within: range | None = None, tag: str = "",
                   parallelism: int = 1) -> TournamentReport:
    """Run all four phases over the space (or the index range ``within``)."""
    indices = within if within is not None else range(space.size)
    if len(indices) < 2:
        raise InvalidArgument("a tournament needs at least two configurations")
    parallelism = max(1, min(parallelism, getattr(runner, "max_concurrent_games", parallelism)))
    ledger = CostLedger()
    games: list[GameResult] = []
    traces: list[RegionTrace] = []
    flags: list[str] = []
    snapshots: list[dict] = []

    if len(indices) == 2:
        flags.append("minimal")
        finalists = [Player(space.configuration(i), 0) for i in indices]
        playoffs = PlayoffOutcome(finalists, [], [], [])
        entrants = finalists
        wild = None
    else:
        partition = partition_regions(space, min(cfg.n_r, len(indices)), indices)
        if cfg.n_r > len(indices):
            flags.append("regions-clamped")
        region_players = [[Player(space.configuration(i), r) for i in partition.members(r)]
                          for r in range(partition.n_r)]
        if cfg.regional:
            outcomes = _map(lambda r: run_regional(region_players[r], r, cfg, runner, tag),
                            list(range(partition.n_r)), parallelism)
            entrants = []
            for o in outcomes:
                games.extend(o.games)
                traces.append(o.trace)
                entrants.extend(o.winners)
        else:
            flags.append("regional-skipped")
            entrants = [p for ps in region_players for p in ps]

        if cfg.global_phase:
            g = run_global(entrants, cfg, runner, tag, parallelism)
            games.extend(g.games)
            snapshots = g.snapshots
            flags += g.flags
            playoff_entrants = g.finalists + ([g.wild_card] if g.wild_card else [])
            wild = g.wild_card
        else:
            flags.append("global-skipped")
            playoff_entrants = list(entrants)
            wild = None
        playoffs = run_playoffs(playoff_entrants, cfg, runner, tag)
        games.extend(playoffs.games)
        flags += playoffs.flags
        entrants = playoff_entrants

    if len(playoffs.finalists) == 2:
        champion, final = run_final(playoffs.finalists, cfg, runner, tag)
        games.append(final)
    else:
        champion = playoffs.finalists[0]

    for r in games:
        ledger.add(r)
    info = {
        "entrants": [p.linear_index for p in entrants],
        "wild_card": wild.linear_index if wild is not None else None,
        "finalists": [p.linear_index for p in playoffs.finalists],
        "eliminated": playoffs.eliminated,
    }
    return TournamentReport(champion.config, games, traces, snapshots, info, ledger, flags,
                            cfg.seed)
