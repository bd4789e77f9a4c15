import numpy as np
import pytest

from dartsolve import dataio
from dartsolve.aimprob import ActionGrid
from dartsolve.board import OUTCOMES, OUTCOME_INDEX


@pytest.fixture(scope="session")
def treble_tables():
    return dataio.load_bundled_trebles()


@pytest.fixture(scope="session")
def tables_by_target(treble_tables):
    out = {}
    for t in treble_tables:
        out.setdefault(t.target, []).append(t)
    return out


def make_toy_grid(actions, aims=None):
    """ActionGrid from a list of {outcome: prob} dicts."""
    probs = np.zeros((len(actions), len(OUTCOMES)))
    for i, dist in enumerate(actions):
        for outcome, p in dist.items():
            probs[i, OUTCOME_INDEX[outcome]] = p
    if aims is None:
        aims = np.zeros((len(actions), 2))
    return ActionGrid(action_set="single", aims=np.asarray(aims, dtype=float),
                      probs=probs, region_ids=tuple(str(i) for i in range(len(actions))))


@pytest.fixture
def toy_grid():
    return make_toy_grid
