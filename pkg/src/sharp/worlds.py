"""Bundled desk-scale worlds and their recommended pipeline settings.

Four 30x30 maps (rooms and corridors at 0.5 m cells, 15 m across) and one
60x60 map exercise the pipeline at two scales. Geometry is built
programmatically so the text exports are bit-exact; each world carries a
per-world recipe (density percentile, region cap, bundled problems chosen so
later problems revisit earlier corridors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import Configuration, Kinematics, OccupancyWorld


def _boxed(n: int) -> np.ndarray:
    occ = np.zeros((n, n), dtype=bool)
    occ[0, :] = occ[n - 1, :] = True
    occ[:, 0] = occ[:, n - 1] = True
    return occ


def _env_a() -> np.ndarray:
    """Four rooms; thick cross walls with one narrow door per wall arm."""
    occ = _boxed(30)
    occ[:, 14:16] = True
    occ[14:16, :] = True
    occ[7, 14:16] = False
    occ[22, 14:16] = False
    occ[14:16, 7] = False
    occ[14:16, 22] = False
    return occ


def _env_b() -> np.ndarray:
    """Four rooms in a chain: two slabs plus a split middle column."""
    occ = _boxed(30)
    occ[:, 9:11] = True     # L | M wall
    occ[:, 19:21] = True    # M | R wall
    occ[14:16, 10:20] = True  # splits the middle slab
    occ[22, 9:11] = False   # L -> M-high door
    occ[14:16, 14] = False  # M-high -> M-low door
    occ[7, 19:21] = False   # M-low -> R door
    return occ


def _env_c() -> np.ndarray:
    """Ring corridor: central block with four walled spokes, one door each."""
    occ = _boxed(30)
    occ[12:18, 12:18] = True
    occ[14:16, 1:12] = True
    occ[14:16, 18:29] = True
    occ[1:12, 14:16] = True
    occ[18:29, 14:16] = True
    occ[14:16, 5] = False
    occ[14:16, 24] = False
    occ[5, 14:16] = False
    occ[24, 14:16] = False
    return occ


def _env_d() -> np.ndarray:
    """Serpentine bands with a doored mid-band divider; gaps wide enough for
    the turning robot."""
    occ = _boxed(30)
    occ[9:11, 0:24] = True
    occ[19:21, 6:30] = True
    occ[11:19, 14:16] = True
    occ[15:17, 14:16] = False
    return occ


def _env_e() -> np.ndarray:
    """Nine rooms at double scale, one narrow door per shared wall."""
    occ = _boxed(60)
    occ[:, 19:21] = True
    occ[:, 39:41] = True
    occ[19:21, :] = True
    occ[39:41, :] = True
    for lo in (9, 29, 49):
        occ[lo, 19:21] = False
        occ[lo, 39:41] = False
        occ[19:21, lo] = False
        occ[39:41, lo] = False
    return occ


@dataclass(frozen=True)
class WorldRecipe:
    """A bundled world plus the settings its experiments run with."""

    name: str
    builder: object
    cell_size: float = 0.5
    kinematics: Kinematics = Kinematics.HOLONOMIC
    noise_sigma: float = 0.05
    max_step: float = 0.5
    v_max: float = 0.5
    omega_max: float = math.pi / 4.0
    density_goals: int = 30
    density_inits: int = 10
    density_percentile: float = 96.0
    max_regions: int | None = 4
    region_threshold: float = 1.0     # endpoint ball radius, meters
    problems: tuple = ()              # ((x_i, y_i), (x_g, y_g)) pairs, meters

    def build(self) -> OccupancyWorld:
        occ = self.builder()
        n = occ.shape[0]
        return OccupancyWorld(width=n, height=n, cell_size=self.cell_size,
                              occupancy=occ, kinematics=self.kinematics,
                              noise_sigma=self.noise_sigma, max_step=self.max_step,
                              v_max=self.v_max, omega_max=self.omega_max)

    def problem_configurations(self) -> list:
        theta = 0.0 if self.kinematics is Kinematics.UNICYCLE else None
        out = []
        for (xi, yi), (xg, yg) in self.problems:
            out.append((Configuration(xi, yi, theta), Configuration(xg, yg, None)))
        return out


RECIPES: dict = {}


def _register(recipe: WorldRecipe) -> None:
    RECIPES[recipe.name] = recipe


_register(WorldRecipe(
    name="env_a", builder=_env_a,
    problems=(((1.25, 1.25), (13.75, 13.75)),
              ((2.25, 1.25), (13.25, 12.25)),
              ((1.25, 13.75), (13.75, 1.25)),
              ((1.75, 12.75), (12.75, 2.25)),
              ((1.25, 2.25), (12.25, 13.25))),
))

_register(WorldRecipe(
    name="env_b", builder=_env_b,
    problems=(((2.25, 2.25), (13.25, 2.25)),
              ((1.75, 4.25), (12.75, 3.25)),
              ((2.25, 13.25), (13.25, 2.75)),
              ((6.75, 13.25), (12.25, 4.25)),
              ((3.25, 12.25), (13.25, 1.75))),
))

_register(WorldRecipe(
    name="env_c", builder=_env_c,
    problems=(((1.25, 1.25), (13.75, 13.75)),
              ((2.75, 1.75), (12.25, 12.75)),
              ((1.25, 13.75), (13.75, 1.25)),
              ((2.25, 12.25), (12.75, 2.75)),
              ((1.75, 2.75), (13.25, 12.25))),
))

_register(WorldRecipe(
    name="env_d", builder=_env_d, kinematics=Kinematics.UNICYCLE,
    max_regions=3,
    problems=(((1.25, 1.25), (13.75, 13.75)),
              ((3.25, 2.25), (12.25, 13.25)),
              ((1.75, 3.25), (13.25, 12.25)),
              ((12.25, 13.25), (2.25, 2.25)),
              ((2.25, 1.25), (10.25, 13.25))),
))

_register(WorldRecipe(
    name="env_e", builder=_env_e, max_regions=12,
    density_goals=40, density_inits=10,
    problems=(((2.25, 2.25), (27.75, 27.75)),
              ((3.75, 2.75), (26.75, 26.25)),
              ((2.25, 27.75), (27.75, 2.25)),
              ((3.25, 26.25), (26.25, 3.25)),
              ((2.75, 2.25), (26.25, 27.25))),
))


def recipe(name: str) -> WorldRecipe:
    try:
        return RECIPES[name]
    except KeyError:
        raise KeyError(f"unknown bundled world {name!r}; "
                       f"have {sorted(RECIPES)}") from None


def bundled_names() -> list:
    return sorted(RECIPES)
