import numpy as np
import pytest

from gametune.engine import Player
from gametune.simrunner import InterferenceModel, SharedNoise, SimRunner
from gametune.space import SearchSpace

QUIET = SharedNoise(kind="none")


def table_model(base, sens=None, shared=QUIET, seed=0, **kw):
    """Model over a 1-D space whose base times are given directly."""
    space = SearchSpace.from_shape([len(base)])
    return InterferenceModel(space, np.asarray(base, float), sens, shared=shared, seed=seed, **kw)


def table_runner(base, sens=None, shared=QUIET, seed=0, **kw):
    return SimRunner(table_model(base, sens, shared, seed, **kw))


def players(space, indices, region=0):
    return [Player(space.configuration(i), region) for i in indices]


@pytest.fixture
def space23():
    return SearchSpace.from_dict({"a": ["x", "y"], "b": [1, 2, 3]})


# acceptance criteria report one line each at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
