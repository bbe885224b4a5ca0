"""Synthetic interference simulator.

Each configuration has a noise-free base time and an interference sensitivity.
A game draws one shared interference level for everyone co-located in it plus
a small per-player jitter, so all players of a game see the same background
conditions while successive games see different ones::

    t_eff = base * max(0.5, 1 + sensitivity * I_game + coloc_factor * (n - 1) + eps)

Work progresses linearly: a player's fraction at time t is ``min(1, t / t_eff)``.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import NO_EARLY_STOP, StopRule
from .errors import InvalidArgument, RefusedEnumeration
from .space import Configuration, SearchSpace

MIN_MULTIPLIER = 0.5
DEFAULT_ENUMERATION_CAP = 10**7


def stable_hash(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


def keyed_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; string keys are hashed."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        entropy.append(stable_hash(k) if isinstance(k, str) else int(k))
    return np.random.default_rng(entropy)


@dataclass(frozen=True)
class SharedNoise:
    """Distribution of the per-game interference level.

    ``lognormal``: ``floor + scale * exp(N(0, sigma))`` truncated at ``cap``.
    ``none``: always zero.
    """

    kind: str = "lognormal"
    scale: float = 0.8
    sigma: float = 1.3
    cap: float = 5.0
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in ("lognormal", "none"):
            raise InvalidArgument(f"unknown shared noise kind {self.kind!r}")
        if min(self.scale, self.sigma, self.cap, self.floor) < 0:
            raise InvalidArgument("shared noise parameters must be non-negative")

    @property
    def silent(self) -> bool:
        return self.kind == "none" or (self.scale == 0 and self.floor == 0)

    def draw(self, rng: np.random.Generator) -> float:
        if self.silent:
            return 0.0
        z = rng.standard_normal()
        return float(min(self.cap, self.floor + self.scale * math.exp(self.sigma * z)))


# ----------------------------------------------------------------------------
# landscapes


@dataclass(frozen=True)
class SensitivitySpec:
    """How interference sensitivity is assigned to configurations.

    ``rank-affine`` (default) makes the fastest configurations the most fragile:
    sensitivity falls linearly from ``high`` (fastest) to ``low`` (slowest). A
    random ``robust_fraction`` of the fastest ``robust_pool`` share of the space
    is then pinned to ``robust`` (``low`` when unset) so some fast configurations
    are also robust. ``scatter`` multiplies each value by a log-normal factor,
    giving a cloud around the trend rather than a line.
    """

    rule: str = "rank-affine"
    low: float = 0.2
    high: float = 0.4
    robust_fraction: float = 1.0
    robust_pool: float = 0.006
    robust: float | None = None
    scatter: float = 0.0
    value: float = 0.0
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.rule not in ("rank-affine", "constant", "table"):
            raise InvalidArgument(f"unknown sensitivity rule {self.rule!r}")
        if min(self.low, self.high, self.value, self.scatter) < 0:
            raise InvalidArgument("sensitivities must be non-negative")
        if not 0 <= self.robust_fraction <= 1 or not 0 < self.robust_pool <= 1:
            raise InvalidArgument("robust_fraction must lie in [0, 1], robust_pool in (0, 1]")


@dataclass(frozen=True)
class LandscapeSpec:
    """Noise-free base-time landscape.

    kinds:
      ``separable-quadratic``: field ``mean_i w_i (x_i - c_i)^2`` over normalised
      coordinates; ``center`` gives the optimum's per-parameter index.
      ``random-smooth``: low-frequency random cosine field plus a quadratic bowl and
      optional per-configuration ``jitter``, rescaled to ``f`` in ``[0, 1]``.
      ``table``: explicit base times indexed by linear index.

    The normalised field ``f`` in ``[0, 1]`` becomes ``scale * exp(spread * f)``
    under the default ``profile="exponential"`` (poor configurations are many
    times slower than good ones) or ``scale * (1 + spread * f)`` under
    ``"linear"``. ``basin > 1`` raises ``f`` to that power first, flattening the
    region around the optimum.
    """

    kind: str = "random-smooth"
    scale: float = 100.0
    spread: float = 6.0
    seed: int = 0
    center: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    waves: int = 8
    bowl: float = 1.0
    jitter: float = 0.05
    table: tuple[float, ...] | None = None
    profile: str = "exponential"
    basin: float = 3.0
    sensitivity: SensitivitySpec = field(default_factory=SensitivitySpec)

    def __post_init__(self):
        if self.kind not in ("separable-quadratic", "random-smooth", "table"):
            raise InvalidArgument(f"unknown landscape kind {self.kind!r}")
        if self.scale <= 0 or self.spread < 0:
            raise InvalidArgument("scale must be positive and spread non-negative")
        if self.basin <= 0:
            raise InvalidArgument("basin must be positive")
        if self.profile not in ("linear", "exponential"):
            raise InvalidArgument(f"unknown landscape profile {self.profile!r}")


def _coordinates(space: SearchSpace) -> np.ndarray:
    """(size, n) matrix of per-parameter positions normalised to [0, 1]."""
    grids = np.indices(space.shape).reshape(space.dimension, -1).T.astype(float)
    denom = np.array([max(n - 1, 1) for n in space.shape], dtype=float)
    return grids / denom


def _normalise(field_: np.ndarray) -> np.ndarray:
    lo, hi = field_.min(), field_.max()
    if hi - lo <= 0:
        return np.zeros_like(field_)
    return (field_ - lo) / (hi - lo)


def landscape_base_times(space: SearchSpace, spec: LandscapeSpec) -> np.ndarray:
    if spec.kind == "table":
        if spec.table is None or len(spec.table) != space.size:
            raise InvalidArgument("table landscape needs one base time per configuration")
        base = np.asarray(spec.table, dtype=float)
        if (base <= 0).any():
            raise InvalidArgument("base times must be positive")
        return base

    x = _coordinates(space)
    rng = keyed_rng(spec.seed, "landscape")
    if spec.kind == "separable-quadratic":
        if spec.center is None:
            center = np.array([rng.integers(n) for n in space.shape], dtype=float)
        else:
            center = np.asarray(spec.center, dtype=float)
        if len(center) != space.dimension:
            raise InvalidArgument("center needs one index per parameter")
        c = center / np.array([max(n - 1, 1) for n in space.shape], dtype=float)
        w = np.ones(space.dimension) if spec.weights is None else np.asarray(spec.weights, float)
        bowl = ((x - c) ** 2 * w).mean(axis=1)
        return _shape(spec, bowl)

    n = space.dimension
    field_ = np.zeros(space.size)
    for _ in range(spec.waves):
        freq = rng.integers(0, 3, size=n).astype(float)
        phase = rng.uniform(0, 2 * np.pi)
        amp = 1.0 / (1.0 + np.linalg.norm(freq))
        field_ += amp * np.cos(2 * np.pi * (x @ freq) / 2 + phase)
    center = rng.uniform(0, 1, size=n)
    field_ = _normalise(field_) + spec.bowl * ((x - center) ** 2).mean(axis=1)
    field_ = _normalise(field_) + spec.jitter * rng.uniform(0, 1, size=space.size)
    return _shape(spec, _normalise(field_))


def _shape(spec: LandscapeSpec, f: np.ndarray) -> np.ndarray:
    if spec.basin != 1.0:
        f = f ** spec.basin
    if spec.profile == "exponential":
        return spec.scale * np.exp(spec.spread * f)
    return spec.scale * (1.0 + spec.spread * f)


def landscape_sensitivities(base: np.ndarray, spec: SensitivitySpec, seed: int = 0) -> np.ndarray:
    size = len(base)
    if spec.rule == "constant":
        return np.full(size, float(spec.value))
    if spec.rule == "table":
        if spec.table is None or len(spec.table) != size:
            raise InvalidArgument("table sensitivity needs one value per configuration")
        return np.asarray(spec.table, dtype=float)
    ranks = np.empty(size)
    ranks[np.argsort(base, kind="stable")] = np.arange(size)
    frac = ranks / max(size - 1, 1)
    sens = spec.high - (spec.high - spec.low) * frac
    if spec.scatter:
        # spread around the trend, mean-preserving in log space
        z = keyed_rng(seed, "scatter").standard_normal(size)
        sens = sens * np.exp(spec.scatter * z - spec.scatter ** 2 / 2)
    pool = max(1, int(round(spec.robust_pool * size)))
    n_robust = int(round(spec.robust_fraction * pool))
    if n_robust:
        fastest = np.argsort(base, kind="stable")[:pool]
        robust = keyed_rng(seed, "robust").choice(fastest, size=n_robust, replace=False)
        sens[robust] = spec.low if spec.robust is None else spec.robust
    return sens


# ----------------------------------------------------------------------------
# model


class InterferenceModel:
    """Ground truth plus noise process for a whole search space.

    Instances are immutable; every random draw comes from a generator keyed by
    ``(seed, key)`` so games can be simulated in any order or concurrently.
    """

    def __init__(self, space: SearchSpace, base_times, sensitivities=None,
                 shared: SharedNoise = SharedNoise(), idiosyncratic_sigma: float = 0.0,
                 coloc_factor: float = 0.0, seed: int = 0, ticks_per_run: int = 100,
                 poll_interval: float | None = None):
        base = np.asarray(base_times, dtype=float)
        if base.shape != (space.size,):
            raise InvalidArgument("need one base time per configuration")
        if (base <= 0).any():
            raise InvalidArgument("base times must be positive")
        sens = np.zeros(space.size) if sensitivities is None else np.asarray(sensitivities, float)
        if sens.shape != (space.size,) or (sens < 0).any():
            raise InvalidArgument("need one non-negative sensitivity per configuration")
        if idiosyncratic_sigma < 0 or coloc_factor < 0:
            raise InvalidArgument("noise parameters must be non-negative")
        self.space = space
        self.base_times = base
        self.sensitivities = sens
        self.shared = shared
        self.idiosyncratic_sigma = float(idiosyncratic_sigma)
        self.coloc_factor = float(coloc_factor)
        self.seed = int(seed)
        if poll_interval is None:
            poll_interval = float(np.median(base)) / ticks_per_run
        if poll_interval <= 0:
            raise InvalidArgument("poll interval must be positive")
        self.poll_interval = float(poll_interval)
        base.setflags(write=False)
        sens.setflags(write=False)

    @classmethod
    def from_landscape(cls, space: SearchSpace, landscape: LandscapeSpec = LandscapeSpec(),
                       **kwargs) -> "InterferenceModel":
        base = landscape_base_times(space, landscape)
        sens = landscape_sensitivities(base, landscape.sensitivity, landscape.seed)
        return cls(space, base, sens, **kwargs)

    def with_seed(self, seed: int) -> "InterferenceModel":
        """Same landscape, independent noise stream."""
        clone = object.__new__(InterferenceModel)
        clone.__dict__.update(self.__dict__)
        clone.seed = int(seed)
        return clone

    @property
    def noise_free(self) -> bool:
        return self.shared.silent and self.idiosyncratic_sigma == 0

    def base_time(self, config: Configuration | int) -> float:
        return float(self.base_times[_index(config)])

    def sensitivity(self, config: Configuration | int) -> float:
        return float(self.sensitivities[_index(config)])

    def game_rng(self, game_id: str) -> np.random.Generator:
        return keyed_rng(self.seed, "game", game_id)

    def game_draws(self, group_size: int, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        """Shared interference level (drawn first, once) and per-player jitter."""
        level = self.shared.draw(rng)
        if self.idiosyncratic_sigma > 0:
            eps = rng.normal(0.0, self.idiosyncratic_sigma, size=group_size)
        else:
            eps = np.zeros(group_size)
        return level, eps

    def slowdowns(self, indices: Sequence[int], level: float, eps: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices, dtype=int)
        mult = (1.0 + self.sensitivities[idx] * level
                + self.coloc_factor * (len(idx) - 1) + eps)
        return np.maximum(mult, MIN_MULTIPLIER)

    def times_for(self, indices: Sequence[int], level: float, eps: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices, dtype=int)
        return self.base_times[idx] * self.slowdowns(idx, level, eps)

    def effective_times(self, group: Sequence[Configuration | int], game_id: str) -> np.ndarray:
        level, eps = self.game_draws(len(group), self.game_rng(game_id))
        return self.times_for([_index(c) for c in group], level, eps)

    def to_rows(self) -> list[tuple[int, float, float]]:
        return [(i, float(b), float(s))
                for i, (b, s) in enumerate(zip(self.base_times, self.sensitivities))]


def _index(config: Configuration | int) -> int:
    return config.linear_index if isinstance(config, Configuration) else int(config)


def effective_time(model: InterferenceModel, config: Configuration | int,
                   group: Sequence[Configuration | int], game_rng: np.random.Generator) -> float:
    """Effective time of ``config`` when co-located with ``group`` (which contains it)."""
    indices = [_index(c) for c in group]
    target = _index(config)
    if target not in indices:
        raise InvalidArgument("config must be a member of its group")
    level, eps = model.game_draws(len(indices), game_rng)
    times = model.times_for(indices, level, eps)
    return float(times[indices.index(target)])


# ----------------------------------------------------------------------------
# runner


class SimSession:
    """Polls linear progress at a fixed cadence; completion is reported at its exact instant."""

    CHUNK = 4096

    def __init__(self, times: np.ndarray, poll_interval: float):
        self.times = np.asarray(times, dtype=float)
        self.poll_interval = poll_interval
        self.finish = float(self.times.min())
        self.failed = np.zeros(len(self.times), dtype=bool)
        self.k = 0
        self.trajectory: list[tuple[float, np.ndarray]] = []

    def _instant(self, k):
        return np.minimum(np.asarray(k, dtype=float) * self.poll_interval, self.finish)

    def fractions_at(self, t):
        return np.minimum(1.0, np.asarray(t, dtype=float)[..., None] / self.times)

    def poll(self) -> tuple[float, np.ndarray]:
        self.k += 1
        t = float(self._instant(self.k))
        fr = self.fractions_at(t)
        if t >= self.finish:
            fr[self.times == self.finish] = 1.0
        return t, fr

    def run_until(self, stop: StopRule) -> tuple[float, np.ndarray]:
        """Vectorised equivalent of polling until completion or ``stop`` fires."""
        last = math.ceil(self.finish / self.poll_interval)
        k = self.k + 1
        while True:
            ks = np.arange(k, min(k + self.CHUNK, last + 1))
            if len(ks) == 0:
                ks = np.array([k])
            t = self._instant(ks)
            fr = self.fractions_at(t)
            done = (t >= self.finish) | stop.fires_many(fr)
            hit = np.flatnonzero(done)
            if len(hit):
                j = int(hit[0])
                self.k = int(ks[j])
                out = fr[j].copy()
                if t[j] >= self.finish:
                    out[self.times == self.finish] = 1.0
                return float(t[j]), out
            k = int(ks[-1]) + 1

    def close(self) -> None:
        pass


class SimRunner:
    """Runner backed by an :class:`InterferenceModel`."""

    def __init__(self, model: InterferenceModel, capacity: int = 1_000_000):
        self.model = model
        self.capacity = capacity

    def start(self, configs: Sequence[Configuration], game_id: str) -> SimSession:
        return SimSession(self.model.effective_times(configs, game_id), self.model.poll_interval)

    def base_time(self, config) -> float:
        return self.model.base_time(config)


@dataclass
class Trajectory:
    times: np.ndarray           # poll instants
    fractions: np.ndarray       # (polls, players)
    elapsed: float
    effective_times: np.ndarray


def simulate_progress(model: InterferenceModel, group: Sequence[Configuration | int],
                      until: StopRule | Callable[[np.ndarray], bool] = NO_EARLY_STOP,
                      game_id: str = "trajectory") -> Trajectory:
    """Poll a game step by step, keeping the whole trajectory.

    ``until`` is either a :class:`StopRule` or any predicate on the fraction
    vector; the game also ends when the fastest player completes.
    """
    if not group:
        raise InvalidArgument("group must be non-empty")
    session = SimSession(model.effective_times(group, game_id), model.poll_interval)
    check = until.fires if isinstance(until, StopRule) else until
    ts, frs = [], []
    while True:
        t, fr = session.poll()
        ts.append(t)
        frs.append(fr)
        if fr.max() >= 1.0 or check(fr):
            break
    return Trajectory(np.array(ts), np.array(frs), ts[-1], session.times)


def true_optimum(model: InterferenceModel, space: SearchSpace | None = None,
                 cap: int = DEFAULT_ENUMERATION_CAP,
                 within: range | None = None) -> tuple[Configuration, float]:
    """Configuration with the smallest noise-free base time (lowest index on ties)."""
    space = space or model.space
    lo, hi = (within.start, within.stop) if within is not None else (0, space.size)
    if hi - lo > cap:
        raise RefusedEnumeration(f"{hi - lo} configurations exceed enumeration cap {cap}")
    best = lo + int(np.argmin(model.base_times[lo:hi]))
    return space.configuration(best), float(model.base_times[best])


def replay_variability(model: InterferenceModel, config: Configuration | int, repeats: int = 100,
                       coloc: int = 1, key: str = "replay") -> tuple[float, float]:
    """Mean effective time and coefficient of variation over independent games.

    Replays use common random numbers, so two configurations compared with the
    same ``key`` face identical interference sequences.

    The configuration shares each replay with ``coloc - 1`` copies of itself.
    """
    if repeats < 2:
        raise InvalidArgument("need at least two repeats")
    if coloc < 1:
        raise InvalidArgument("coloc must be at least 1")
    idx = _index(config)
    mult = np.empty(repeats)
    # replay r sees the same conditions whichever configuration is replayed
    for r in range(repeats):
        rng = keyed_rng(model.seed, key, r)
        level, eps = model.game_draws(coloc, rng)
        mult[r] = model.slowdowns([idx] * coloc, level, eps)[0]
    # CoV from the slowdowns alone, so equal sensitivities give equal CoV exactly
    m = float(mult.mean())
    return float(model.base_times[idx]) * m, float(mult.std(ddof=1) / m)


def save_landscape(model: InterferenceModel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["linear_index", "base_time", "sensitivity"])
        for row in model.to_rows():
            w.writerow([row[0], repr(row[1]), repr(row[2])])


def load_landscape(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a landscape table written by :func:`save_landscape`."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["linear_index"]))
    if [int(r["linear_index"]) for r in rows] != list(range(len(rows))):
        raise InvalidArgument(f"{path}: linear indices must cover 0..n-1")
    base = np.array([float(r["base_time"]) for r in rows])
    sens = np.array([float(r["sensitivity"]) for r in rows])
    return base, sens
