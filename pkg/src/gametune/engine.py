"""Playing a single game: co-located execution, execution scores, early termination.

A runner starts a *session* for a group of configurations. The engine polls the
session for per-player work fractions until the fastest player completes or the
early-termination rule fires, then turns the final work fractions into
execution scores (each player's progress relative to the leader).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import GameFailed, InvalidArgument, NoHistory
from .space import Configuration


@dataclass(frozen=True)
class HistoryEntry:
    game_id: str
    phase: str
    score: float
    rank: int
    group_size: int


@dataclass(eq=False)
class Player:
    config: Configuration
    region: int = 0
    history: list[HistoryEntry] = field(default_factory=list)
    wins: int = 0

    @property
    def linear_index(self) -> int:
        return self.config.linear_index

    def entries(self, game_ids: Iterable[str] | None = None) -> list[HistoryEntry]:
        if game_ids is None:
            return list(self.history)
        ids = set(game_ids)
        return [h for h in self.history if h.game_id in ids]

    def mean_score(self) -> float:
        """Average execution score over every game played so far (0 if none)."""
        if not self.history:
            return 0.0
        return sum(h.score for h in self.history) / len(self.history)

    def best_score(self, game_ids: Iterable[str] | None = None) -> float:
        entries = self.entries(game_ids)
        return max((h.score for h in entries), default=0.0)

    def last_score(self) -> float:
        return self.history[-1].score if self.history else 0.0

    def __repr__(self) -> str:
        return f"Player({self.linear_index}, region={self.region}, games={len(self.history)})"


@dataclass(frozen=True)
class StopRule:
    """When a game may end before its fastest player completes.

    ``d`` is an absolute gap in percentage points between the leader's and the
    runner-up's work fraction; the leader must also have finished at least
    ``min_work_fraction`` of its work.
    """

    early_termination: bool = True
    d: float = 10.0
    min_work_fraction: float = 0.25

    def __post_init__(self):
        if not 0 < self.d < 100:
            raise InvalidArgument(f"d must lie in (0, 100), got {self.d}")
        if not 0 < self.min_work_fraction <= 1:
            raise InvalidArgument(
                f"min_work_fraction must lie in (0, 1], got {self.min_work_fraction}")

    @property
    def gap(self) -> float:
        return self.d / 100.0

    def fires(self, fractions: np.ndarray) -> bool:
        if not self.early_termination or len(fractions) < 2:
            return False
        top2 = np.sort(fractions)[-2:]
        lead, second = float(top2[1]), float(top2[0])
        return lead >= self.min_work_fraction and lead - second > self.gap

    def fires_many(self, fractions: np.ndarray) -> np.ndarray:
        """Vectorised ``fires`` over rows of a (ticks, players) matrix."""
        n_ticks, n = fractions.shape
        if not self.early_termination or n < 2:
            return np.zeros(n_ticks, dtype=bool)
        top2 = np.sort(fractions, axis=1)[:, -2:]
        lead, second = top2[:, 1], top2[:, 0]
        return (lead >= self.min_work_fraction) & (lead - second > self.gap)


NO_EARLY_STOP = StopRule(early_termination=False)


class Session(Protocol):
    """A live co-located execution of one group of configurations."""

    failed: np.ndarray

    def poll(self) -> tuple[float, np.ndarray]:
        """Advance to the next progress check; return (elapsed, work fractions)."""

    def close(self) -> None:
        ...


class Runner(Protocol):
    capacity: int

    def start(self, configs: Sequence[Configuration], game_id: str) -> Session:
        ...


@dataclass(frozen=True)
class GameSpec:
    game_id: str
    players: Sequence[Player]
    stop: StopRule = StopRule()
    phase: str = ""
    allow_duplicates: bool = False

    @property
    def early_termination(self) -> bool:
        return self.stop.early_termination

    @property
    def d(self) -> float:
        return self.stop.d

    @property
    def min_work_fraction(self) -> float:
        return self.stop.min_work_fraction


@dataclass(frozen=True)
class GameResult:
    game_id: str
    phase: str
    players: tuple[int, ...]
    work_fractions: tuple[float, ...]
    scores: tuple[float, ...]
    failed: tuple[bool, ...]
    winner_pos: int
    terminated_early: bool
    elapsed: float

    @property
    def winner(self) -> int:
        return self.players[self.winner_pos]

    @property
    def group_size(self) -> int:
        return len(self.players)

    @property
    def cost(self) -> float:
        return self.group_size * self.elapsed

    @property
    def savings_estimate(self) -> float:
        """Core-time the leader would still have needed to finish, times group size."""
        if not self.terminated_early:
            return 0.0
        lead = self.work_fractions[self.winner_pos]
        return self.group_size * self.elapsed * (1.0 / lead - 1.0)

    def to_dict(self) -> dict:
        return {
            "game_id": self.game_id,
            "phase": self.phase,
            "players": list(self.players),
            "work_fractions": list(self.work_fractions),
            "scores": list(self.scores),
            "failed": list(self.failed),
            "winner": self.winner,
            "terminated_early": self.terminated_early,
            "elapsed": self.elapsed,
            "cost": self.cost,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GameResult":
        players = tuple(d["players"])
        return cls(
            game_id=d["game_id"], phase=d.get("phase", ""), players=players,
            work_fractions=tuple(d["work_fractions"]), scores=tuple(d["scores"]),
            failed=tuple(d.get("failed", [False] * len(players))),
            winner_pos=_winner_position(np.asarray(d["work_fractions"], float), players),
            terminated_early=d["terminated_early"], elapsed=d["elapsed"])


def _winner_position(fractions: np.ndarray, ids: Sequence[int]) -> int:
    return min(range(len(ids)), key=lambda i: (-fractions[i], ids[i], i))


def execution_scores(fractions: np.ndarray, winner_pos: int) -> np.ndarray:
    return fractions / fractions[winner_pos]


def _drive(session, stop: StopRule) -> tuple[float, np.ndarray]:
    run_until = getattr(session, "run_until", None)
    if run_until is not None:
        return run_until(stop)
    while True:
        t, fractions = session.poll()
        fractions = np.where(session.failed, 0.0, fractions)
        if session.failed.all():
            return t, fractions
        if fractions.max() >= 1.0 or stop.fires(fractions):
            return t, fractions


def play_game(spec: GameSpec, runner: Runner, record: bool = True) -> GameResult:
    """Run one co-located game and (by default) append it to each player's history."""
    players = list(spec.players)
    n = len(players)
    if n < 2:
        raise InvalidArgument("a game needs at least two players")
    if n > runner.capacity:
        raise InvalidArgument(f"{n} players exceed runner capacity {runner.capacity}")
    ids = [p.linear_index for p in players]
    if not spec.allow_duplicates and len(set(ids)) != n:
        raise InvalidArgument("duplicate configurations in one game")

    session = runner.start([p.config for p in players], spec.game_id)
    try:
        elapsed, fractions = _drive(session, spec.stop)
        failed = np.asarray(session.failed, dtype=bool).copy()
    finally:
        session.close()

    fractions = np.clip(np.where(failed, 0.0, np.asarray(fractions, dtype=float)), 0.0, 1.0)
    if failed.all() or fractions.max() <= 0.0:
        raise GameFailed(f"game {spec.game_id}: no player made progress")
    winner_pos = _winner_position(fractions, ids)
    scores = execution_scores(fractions, winner_pos)
    result = GameResult(
        game_id=spec.game_id,
        phase=spec.phase,
        players=tuple(ids),
        work_fractions=tuple(float(x) for x in fractions),
        scores=tuple(float(x) for x in scores),
        failed=tuple(bool(x) for x in failed),
        winner_pos=winner_pos,
        terminated_early=bool(fractions[winner_pos] < 1.0),
        elapsed=float(elapsed),
    )
    if record:
        record_result(players, result)
    return result


def record_result(players: Sequence[Player], result: GameResult) -> None:
    ranks = rank_by_execution_score(result)
    for pos, player in enumerate(players):
        player.history.append(HistoryEntry(
            result.game_id, result.phase, result.scores[pos], ranks[pos], result.group_size))
    players[result.winner_pos].wins += 1


def run_solo(config: Configuration, runner: Runner, game_id: str) -> float:
    """Execute one configuration alone to completion; return its elapsed time."""
    session = runner.start([config], game_id)
    try:
        elapsed, fractions = _drive(session, NO_EARLY_STOP)
        failed = bool(np.asarray(session.failed).any())
    finally:
        session.close()
    if failed or fractions[0] < 1.0:
        raise GameFailed(f"solo run {game_id} of configuration {config.linear_index} failed")
    return float(elapsed)


def rank_by_execution_score(result: GameResult) -> list[int]:
    """1-based ranks aligned with ``result.players``; ties go to the lower linear index."""
    order = sorted(range(result.group_size),
                   key=lambda i: (-result.scores[i], result.players[i], i))
    ranks = [0] * result.group_size
    for r, pos in enumerate(order, start=1):
        ranks[pos] = r
    return ranks


def consistency_score(player: Player, phase_game_ids: Iterable[str]) -> float:
    """Mean of 1/rank over the player's games whose id is in ``phase_game_ids``."""
    entries = player.entries(phase_game_ids)
    if not entries:
        raise NoHistory(f"player {player.linear_index} has no qualifying games")
    return sum(1.0 / h.rank for h in entries) / len(entries)


@dataclass(frozen=True)
class CombinedRanking:
    order: tuple[int, ...]            # positions, best first
    exec_ranks: tuple[int, ...]
    consistency_ranks: tuple[int, ...]
    consistency: tuple[float, ...]
    sums: tuple[int, ...]

    @property
    def winner_pos(self) -> int:
        return self.order[0]


def combined_rank(players: Sequence[Player], result: GameResult,
                  phase_game_ids: Iterable[str], use_exec: bool = True,
                  use_consistency: bool = True) -> CombinedRanking:
    """Winner = lowest (execution rank + consistency rank).

    Ties fall to the higher execution score in ``result``, then the lower
    linear index. Disabling one component ranks by the other alone.
    """
    ids = set(phase_game_ids) | {result.game_id}
    n = len(players)
    scores = result.scores
    exec_ranks = rank_by_execution_score(result)
    cons = []
    for p in players:
        try:
            cons.append(consistency_score(p, ids))
        except NoHistory:
            cons.append(0.0)
    c_order = sorted(range(n), key=lambda i: (-cons[i], -scores[i], result.players[i], i))
    cons_ranks = [0] * n
    for r, pos in enumerate(c_order, start=1):
        cons_ranks[pos] = r
    sums = [(exec_ranks[i] if use_exec else 0) + (cons_ranks[i] if use_consistency else 0)
            for i in range(n)]
    # a failed player never wins, whatever its earlier record
    order = sorted(range(n), key=lambda i: (result.failed[i], sums[i], -scores[i],
                                            result.players[i], i))
    return CombinedRanking(tuple(order), tuple(exec_ranks), tuple(cons_ranks),
                           tuple(cons), tuple(sums))
