import numpy as np
import pytest
from hypothesis import settings

from replicator_atlas.games import MixedProfile, balls_bins, gw_game, star_stag_hunt

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def g2():
    return gw_game(2.0)


@pytest.fixture
def bb22():
    return balls_bins(2, 2)


@pytest.fixture
def star3():
    return star_stag_hunt(3, 2.0)


def stag_profile(p1: float, p2: float) -> MixedProfile:
    return MixedProfile.from_vectors([[p1, 1 - p1], [p2, 1 - p2]])


def star_profile(x, y) -> MixedProfile:
    return MixedProfile.from_vectors([[v, 1 - v] for v in x] + [[y, 1 - y]])


def random_profile(rng: np.random.Generator, shape) -> MixedProfile:
    return MixedProfile(np.concatenate([rng.dirichlet(np.ones(k)) for k in shape]), tuple(shape))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter) -> None:
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
