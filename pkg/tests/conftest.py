import numpy as np
import pytest

from sharp.world import Kinematics, OccupancyWorld


def grid_from_rows(rows, cell_size=1.0, **kwargs) -> OccupancyWorld:
    """Build a world from ASCII rows given top row first ('#' = obstacle)."""
    height = len(rows)
    width = len(rows[0])
    occ = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(rows):
        assert len(row) == width, "ragged rows"
        for ix, ch in enumerate(row):
            occ[height - 1 - r, ix] = ch == "#"
    return OccupancyWorld(width=width, height=height, cell_size=cell_size,
                          occupancy=occ, **kwargs)


def open_world(width, height, cell_size=1.0, **kwargs) -> OccupancyWorld:
    occ = np.zeros((height, width), dtype=bool)
    return OccupancyWorld(width=width, height=height, cell_size=cell_size,
                          occupancy=occ, **kwargs)


def random_world(rng, width, height, wall_fraction=0.2, cell_size=1.0, **kwargs):
    """Random obstacle field; not guaranteed connected."""
    occ = rng.random((height, width)) < wall_fraction
    return OccupancyWorld(width=width, height=height, cell_size=cell_size,
                          occupancy=occ, **kwargs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def empty10():
    return open_world(10, 10)


@pytest.fixture
def unicycle10():
    return open_world(10, 10, kinematics=Kinematics.UNICYCLE)
