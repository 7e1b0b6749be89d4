"""Occupancy-grid world model: collision oracle and a seeded stochastic simulator.

Coordinate conventions used everywhere in the package:

* world coordinates are meters, x to the right, y up;
* a grid cell is addressed as ``(ix, iy)`` with ``iy = 0`` at the bottom;
* the cell ``(ix, iy)`` covers ``[ix*cs, (ix+1)*cs) x [iy*cs, (iy+1)*cs)``
  where ``cs`` is the cell size, so its center is ``((ix+.5)*cs, (iy+.5)*cs)``.

The text file format stores row 0 as the *top* row; parsing flips it.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoFreeSpace, ParseError

TWO_PI = 2.0 * math.pi

# Swept segments are sampled at this fraction of a cell so motion cannot
# tunnel through a one-cell wall.
SWEEP_FRACTION = 0.25


def wrap_angle(theta: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


class Kinematics(enum.Enum):
    HOLONOMIC = "holonomic"
    UNICYCLE = "unicycle"


@dataclass(frozen=True)
class Configuration:
    """A point in the robot's configuration space.

    ``theta`` is present (not None) only under unicycle kinematics.
    """

    x: float
    y: float
    theta: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite configuration ({self.x}, {self.y})")
        if self.theta is not None:
            object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def distance_to(self, other: "Configuration | tuple[float, float]") -> float:
        ox, oy = (other.x, other.y) if isinstance(other, Configuration) else other
        return math.hypot(self.x - ox, self.y - oy)


@dataclass(frozen=True)
class HolonomicAction:
    """Commanded planar displacement, Euclidean norm bounded by max_step."""

    dx: float
    dy: float


@dataclass(frozen=True)
class UnicycleAction:
    """Forward velocity and turn rate applied for one tick (dt = 1)."""

    v: float
    omega: float


Action = HolonomicAction | UnicycleAction


@dataclass
class OccupancyWorld:
    """Immutable grid environment plus robot kinematics and noise model.

    occupancy[iy, ix] is True on obstacle cells. Queries never mutate the
    world, so one instance is safely shared by concurrent rollouts.
    """

    width: int
    height: int
    cell_size: float
    occupancy: np.ndarray
    kinematics: Kinematics = Kinematics.HOLONOMIC
    noise_sigma: float = 0.0
    max_step: float = 1.0
    v_max: float = 1.0
    omega_max: float = math.pi / 4.0
    _free_cells: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        occ = np.array(self.occupancy, dtype=bool)  # private copy, then frozen
        if occ.shape != (self.height, self.width):
            raise ValueError(f"occupancy shape {occ.shape} != ({self.height}, {self.width})")
        occ.setflags(write=False)
        self.occupancy = occ

    # -- geometry -----------------------------------------------------------

    @property
    def extent(self) -> tuple[float, float]:
        return (self.width * self.cell_size, self.height * self.cell_size)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(x / self.cell_size)), int(math.floor(y / self.cell_size)))

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        ix, iy = cell
        return ((ix + 0.5) * self.cell_size, (iy + 0.5) * self.cell_size)

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        ix, iy = cell
        return 0 <= ix < self.width and 0 <= iy < self.height

    def cell_free(self, cell: tuple[int, int]) -> bool:
        return self.in_bounds(cell) and not self.occupancy[cell[1], cell[0]]

    def free_cells(self) -> np.ndarray:
        """(n, 2) int array of free (ix, iy) cells in row-major scan order."""
        if self._free_cells is None:
            iy, ix = np.nonzero(~self.occupancy)
            self._free_cells = np.column_stack([ix, iy])
        return self._free_cells

    # -- collision oracle ----------------------------------------------------

    def collision_xy(self, x: float, y: float) -> bool:
        ix = int(math.floor(x / self.cell_size))
        iy = int(math.floor(y / self.cell_size))
        if ix < 0 or iy < 0 or ix >= self.width or iy >= self.height:
            return True  # out of bounds counts as collision
        return bool(self.occupancy[iy, ix])

    def segment_free(self, a: tuple[float, float], b: tuple[float, float]) -> bool:
        """True iff the straight segment a->b stays collision-free.

        Sampled every SWEEP_FRACTION * cell_size, endpoints included.
        """
        ax, ay = a
        bx, by = b
        dist = math.hypot(bx - ax, by - ay)
        n = max(1, int(math.ceil(dist / (SWEEP_FRACTION * self.cell_size))))
        for i in range(n + 1):
            t = i / n
            if self.collision_xy(ax + t * (bx - ax), ay + t * (by - ay)):
                return False
        return True


def collision(world: OccupancyWorld, c: Configuration) -> bool:
    """Collision function over configurations; out-of-bounds collides."""
    return world.collision_xy(c.x, c.y)


def clip_action(world: OccupancyWorld, a: Action) -> Action:
    """Clamp a command into the world's declared action bounds."""
    if isinstance(a, HolonomicAction):
        norm = math.hypot(a.dx, a.dy)
        if norm > world.max_step and norm > 0:
            s = world.max_step / norm
            return HolonomicAction(a.dx * s, a.dy * s)
        return a
    v = min(max(a.v, 0.0), world.v_max)  # forward-only drive
    omega = min(max(a.omega, -world.omega_max), world.omega_max)
    return UnicycleAction(v, omega)


def _truncate_to_free(world: OccupancyWorld, start: tuple[float, float],
                      target: tuple[float, float]) -> tuple[float, float]:
    """Last collision-free point walking start->target at sub-cell resolution."""
    sx, sy = start
    tx, ty = target
    dist = math.hypot(tx - sx, ty - sy)
    if dist == 0.0:
        return start
    n = max(1, int(math.ceil(dist / (SWEEP_FRACTION * world.cell_size))))
    ok = start
    for i in range(1, n + 1):
        t = i / n
        px, py = sx + t * (tx - sx), sy + t * (ty - sy)
        if world.collision_xy(px, py):
            return ok
        ok = (px, py)
    return ok


def step(world: OccupancyWorld, c: Configuration, a: Action,
         rng: np.random.Generator) -> Configuration:
    """Simulate one noisy action from a collision-free configuration.

    The command is clipped to the action bounds, perturbed by zero-mean
    Gaussian noise, integrated by the kinematic model, and the translation is
    truncated at the last free point of the swept segment. A fully blocked
    command leaves the position unchanged.

    Noise law (a declared model; the scale is a fraction of the command):
    holonomic commands get per-axis sigma = noise_sigma * ||(dx, dy)||;
    unicycle commands get sigma = noise_sigma * |v| on v and
    noise_sigma * |omega| on omega, so a zero component stays exactly zero
    and pure rotation never translates.
    """
    a = clip_action(world, a)
    noise = rng.standard_normal(2)
    if isinstance(a, HolonomicAction):
        sigma = world.noise_sigma * math.hypot(a.dx, a.dy)
        dx = a.dx + sigma * noise[0]
        dy = a.dy + sigma * noise[1]
        nx, ny = _truncate_to_free(world, c.xy, (c.x + dx, c.y + dy))
        return Configuration(nx, ny, c.theta)
    theta = c.theta if c.theta is not None else 0.0
    v = a.v + world.noise_sigma * abs(a.v) * noise[0]
    omega = a.omega + world.noise_sigma * abs(a.omega) * noise[1]
    # translate along the current heading, then rotate in place (dt = 1)
    nx, ny = _truncate_to_free(world, c.xy, (c.x + v * math.cos(theta),
                                             c.y + v * math.sin(theta)))
    return Configuration(nx, ny, wrap_angle(theta + omega))


def sample_free(world: OccupancyWorld, rng: np.random.Generator) -> Configuration:
    """Uniform sample over free cells, jittered uniformly inside the cell."""
    cells = world.free_cells()
    if len(cells) == 0:
        raise NoFreeSpace("every cell of the grid is occupied")
    ix, iy = cells[int(rng.integers(len(cells)))]
    jx, jy = rng.uniform(0.0, 1.0, size=2)
    x = (ix + jx) * world.cell_size
    y = (iy + jy) * world.cell_size
    theta = None
    if world.kinematics is Kinematics.UNICYCLE:
        theta = float(rng.uniform(-math.pi, math.pi))
    return Configuration(x, y, theta)


def steer_toward(world: OccupancyWorld, c: Configuration,
                 target: tuple[float, float]) -> Action:
    """Proportional one-tick command that moves ``c`` toward ``target``.

    This is the shared waypoint-tracking law: the replanning baseline uses it
    directly and learned policies use it to turn a commanded displacement
    into a kinematically valid action.
    """
    dx = target[0] - c.x
    dy = target[1] - c.y
    if world.kinematics is Kinematics.HOLONOMIC:
        return clip_action(world, HolonomicAction(dx, dy))
    theta = c.theta if c.theta is not None else 0.0
    dist = math.hypot(dx, dy)
    if dist < 1e-12:
        return UnicycleAction(0.0, 0.0)
    err = wrap_angle(math.atan2(dy, dx) - theta)
    if abs(err) > 0.5:
        return clip_action(world, UnicycleAction(0.0, err))  # rotate in place
    v = min(world.v_max, dist) * math.cos(err)
    return clip_action(world, UnicycleAction(v, err))


# -- text format ---------------------------------------------------------------

MAGIC = "P1-ASCII"


def world_to_text(world: OccupancyWorld) -> str:
    """Serialize the grid to the plain-text format (row 0 = top row)."""
    lines = [f"{MAGIC} {world.width} {world.height} {world.cell_size:g}"]
    for row in range(world.height):
        iy = world.height - 1 - row
        lines.append("".join("#" if world.occupancy[iy, ix] else "."
                             for ix in range(world.width)))
    return "\n".join(lines) + "\n"


def world_from_text(text: str, **overrides) -> OccupancyWorld:
    """Parse the plain-text grid format; keyword overrides set kinematics etc."""
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty world file", line=1)
    header = lines[0].split()
    if len(header) != 4 or header[0] != MAGIC:
        raise ParseError(f"expected '{MAGIC} <width> <height> <cell_size>'", line=1)
    try:
        width, height = int(header[1]), int(header[2])
        cell_size = float(header[3])
    except ValueError as e:
        raise ParseError(f"bad header field: {e}", line=1) from None
    if width <= 0 or height <= 0 or cell_size <= 0:
        raise ParseError("width, height, cell_size must be positive", line=1)
    if len(lines) < 1 + height:
        raise ParseError(f"expected {height} grid rows, found {len(lines) - 1}",
                         line=len(lines))
    occ = np.zeros((height, width), dtype=bool)
    for row in range(height):
        raw = lines[1 + row]
        if len(raw) != width:
            raise ParseError(f"row has {len(raw)} cells, expected {width}",
                             line=2 + row, offset=len(raw))
        for ix, ch in enumerate(raw):
            if ch == "#":
                occ[height - 1 - row, ix] = True
            elif ch != ".":
                raise ParseError(f"unknown cell character {ch!r}", line=2 + row,
                                 offset=ix)
    return OccupancyWorld(width=width, height=height, cell_size=cell_size,
                          occupancy=occ, **overrides)


_CONFIG_KEYS = ("kinematics", "noise_sigma", "max_step", "v_max", "omega_max")


def parse_sidecar(text: str) -> dict:
    """Parse a key=value sidecar config into OccupancyWorld overrides."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ParseError(f"unknown world config key {key!r}", line=lineno)
        if key == "kinematics":
            try:
                out[key] = Kinematics(value)
            except ValueError:
                raise ParseError(f"unknown kinematics {value!r}", line=lineno) from None
        else:
            try:
                out[key] = float(value)
            except ValueError:
                raise ParseError(f"bad number {value!r} for {key}", line=lineno) from None
    return out


def sidecar_to_text(world: OccupancyWorld) -> str:
    return (f"kinematics={world.kinematics.value}\n"
            f"noise_sigma={world.noise_sigma:g}\n"
            f"max_step={world.max_step:g}\n"
            f"v_max={world.v_max:g}\n"
            f"omega_max={world.omega_max!r}\n")


def with_params(world: OccupancyWorld, **overrides) -> OccupancyWorld:
    """Copy of the world with different kinematics/noise/bounds."""
    return replace(world, _free_cells=None, **overrides)


def world_hash(world: OccupancyWorld) -> str:
    """Stable 16-hex digest of geometry plus simulation parameters."""
    payload = world_to_text(world) + sidecar_to_text(world)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
