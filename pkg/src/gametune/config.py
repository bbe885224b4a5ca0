"""Experiment configuration: one YAML file, validated up front.

Layout (``version: 1``)::

    version: 1
    seed: 7
    output_dir: out/demo
    repeats: 1
    replay_repeats: 100
    space:
      shape: [10, 10, 10, 10]        # or  parameters: {name: [values, ...]}
    runner:
      kind: simulator                # or process
      simulator: {...}
      process: {...}
    tournament: {P: 8, n_r: 100, ...}
    baseline: {kind: random, subspaces: 10, outer_budget: 3}
    compare: {methods: [...]}
    ablate: {variants: [...]}

Unknown keys are rejected so typos surface as errors instead of silently
falling back to defaults.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError, GameTuneError
from .procrunner import ProcRunner, WorkloadTemplate
from .simrunner import InterferenceModel, LandscapeSpec, SensitivitySpec, SharedNoise, SimRunner
from .space import SearchSpace
from .tournament import TournamentConfig

CONFIG_VERSION = 1

METHODS = ("tournament", "noise-unaware", "exhaustive-in-noise", "integrated")
BASELINES = ("random", "hillclimb")


def _check_keys(section: str, d: Mapping, allowed, required=()) -> None:
    if not isinstance(d, Mapping):
        raise ConfigError(section, "expected a mapping")
    for key in required:
        if key not in d:
            raise ConfigError(f"{section}.{key}" if section else key, "missing required field")
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}" if section else str(key), "unknown field")


def _fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, section: str, d: Mapping, **extra):
    _check_keys(section, d, _fields(cls) - set(extra))
    kwargs = dict(d)
    for k, v in kwargs.items():
        if isinstance(v, list):
            kwargs[k] = tuple(v)
    try:
        return cls(**kwargs, **extra)
    except GameTuneError as exc:
        raise ConfigError(section, str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(section, str(exc)) from exc


@dataclass
class SimulatorSettings:
    landscape: dict = field(default_factory=dict)
    sensitivity: dict = field(default_factory=dict)
    shared_noise: dict = field(default_factory=dict)
    idiosyncratic_sigma: float = 0.0
    coloc_factor: float = 0.0
    ticks_per_run: int = 100

    def model(self, space: SearchSpace, seed: int) -> InterferenceModel:
        sens = _build(SensitivitySpec, "runner.simulator.sensitivity", self.sensitivity)
        land = _build(LandscapeSpec, "runner.simulator.landscape", self.landscape,
                      sensitivity=sens)
        shared = _build(SharedNoise, "runner.simulator.shared_noise", self.shared_noise)
        try:
            return InterferenceModel.from_landscape(
                space, land, shared=shared, idiosyncratic_sigma=self.idiosyncratic_sigma,
                coloc_factor=self.coloc_factor, seed=seed, ticks_per_run=self.ticks_per_run)
        except GameTuneError as exc:
            raise ConfigError("runner.simulator", str(exc)) from exc


@dataclass
class ProcessSettings:
    workload: WorkloadTemplate
    slots: int | None = None
    poll_interval: float = 0.25
    workdir: str | None = None


@dataclass
class ExperimentConfig:
    version: int
    space: SearchSpace
    runner_kind: str
    simulator: SimulatorSettings | None
    process: ProcessSettings | None
    tournament: TournamentConfig
    seed: int = 0
    output_dir: str = "out"
    repeats: int = 1
    replay_repeats: int = 100
    subspaces: int = 10
    outer_budget: int = 3
    baseline: str = "random"
    methods: tuple[str, ...] = METHODS
    variants: tuple[str, ...] = ()
    source: dict = field(default_factory=dict)
    _model: InterferenceModel | None = field(default=None, repr=False, compare=False)

    @property
    def is_simulated(self) -> bool:
        return self.runner_kind == "simulator"

    def tournament_config(self, seed: int) -> TournamentConfig:
        return dataclasses.replace(self.tournament, seed=seed)

    def model(self, noise_seed: int) -> InterferenceModel:
        """The configured landscape with noise stream ``noise_seed``."""
        if self.simulator is None:
            raise ConfigError("runner.kind", "this operation needs the simulator runner")
        if self._model is None:
            self._model = self.simulator.model(self.space, 0)
        return self._model.with_seed(noise_seed)

    def runner(self, noise_seed: int):
        if self.is_simulated:
            return SimRunner(self.model(noise_seed))
        p = self.process
        return ProcRunner(self.space, p.workload, slots=p.slots, poll_interval=p.poll_interval,
                          root=p.workdir)


def _space(d: Mapping) -> SearchSpace:
    _check_keys("space", d, {"shape", "parameters"})
    if ("shape" in d) == ("parameters" in d):
        raise ConfigError("space", "give exactly one of shape or parameters")
    try:
        if "shape" in d:
            shape = d["shape"]
            if not isinstance(shape, list) or not all(isinstance(n, int) and n > 0 for n in shape):
                raise ConfigError("space.shape", "expected a list of positive integers")
            return SearchSpace.from_shape(shape)
        params = d["parameters"]
        if not isinstance(params, Mapping) or not params:
            raise ConfigError("space.parameters", "expected a non-empty mapping")
        return SearchSpace.from_dict({str(k): list(v) for k, v in params.items()})
    except GameTuneError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("space", str(exc)) from exc


def _int(d: Mapping, key: str, default: int, minimum: int, section: str = "") -> int:
    v = d.get(key, default)
    name = f"{section}.{key}" if section else key
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigError(name, f"expected an integer >= {minimum}")
    return v


def parse_config(d: Any) -> ExperimentConfig:
    if not isinstance(d, Mapping):
        raise ConfigError("config", "must be a mapping at the top level")
    _check_keys("", d, {"version", "seed", "output_dir", "repeats", "replay_repeats", "space",
                        "runner", "tournament", "baseline", "compare", "ablate"},
                required=("version", "space", "runner"))
    if d["version"] != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported version {d['version']!r}; expected {CONFIG_VERSION}")
    space = _space(d["space"])

    runner = d["runner"]
    _check_keys("runner", runner, {"kind", "simulator", "process"}, required=("kind",))
    kind = runner["kind"]
    sim = proc = model = None
    if kind == "simulator":
        s = runner.get("simulator") or {}
        _check_keys("runner.simulator", s, _fields(SimulatorSettings))
        sim = SimulatorSettings(**s)
        model = sim.model(space, 0)  # validates every nested section now
    elif kind == "process":
        p = runner.get("process")
        if p is None:
            raise ConfigError("runner.process", "missing required field")
        _check_keys("runner.process", p, {"workload", "slots", "poll_interval", "workdir"},
                    required=("workload",))
        workload = WorkloadTemplate.from_dict(p["workload"])
        workload.validate(space)
        proc = ProcessSettings(workload, p.get("slots"), p.get("poll_interval", 0.25),
                               p.get("workdir"))
    else:
        raise ConfigError("runner.kind", f"expected simulator or process, got {kind!r}")

    tournament = _build(TournamentConfig, "tournament", d.get("tournament") or {})

    baseline = d.get("baseline") or {}
    _check_keys("baseline", baseline, {"kind", "subspaces", "outer_budget"})
    if baseline.get("kind", "random") not in BASELINES:
        raise ConfigError("baseline.kind", f"expected one of {', '.join(BASELINES)}")
    compare = d.get("compare") or {}
    _check_keys("compare", compare, {"methods"})
    methods = tuple(compare.get("methods", METHODS))
    for m in methods:
        if m not in METHODS:
            raise ConfigError("compare.methods", f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    ablate = d.get("ablate") or {}
    _check_keys("ablate", ablate, {"variants"})

    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", "expected an integer")
    return ExperimentConfig(
        version=d["version"], space=space, runner_kind=kind, simulator=sim, process=proc,
        tournament=tournament, seed=seed, output_dir=str(d.get("output_dir", "out")),
        repeats=_int(d, "repeats", 1, 1), replay_repeats=_int(d, "replay_repeats", 100, 2),
        subspaces=_int(baseline, "subspaces", 10, 2, "baseline"),
        outer_budget=_int(baseline, "outer_budget", 3, 1, "baseline"),
        baseline=baseline.get("kind", "random"),
        methods=methods, variants=tuple(ablate.get("variants", ())), source=dict(d),
        _model=model)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("path", f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from exc
    return parse_config(data)
