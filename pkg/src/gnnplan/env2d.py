"""Unit-square worlds with walls, corridor gaps and blob corruptions.

Obstacles are closed sets: a point on a wall edge or on a blob's rim is in
collision.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, GenerationError
from .rng import stream

WALL_THICKNESS = 0.04
MIN_CORRIDOR_WIDTH = 0.05
DEFAULT_STEP = 0.01


def _as_rows(values, width):
    arr = np.asarray(values, dtype=np.float64).reshape(-1, width)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class World2D:
    """Axis-aligned wall rectangles ``[xmin, ymin, xmax, ymax]`` and blob discs
    ``[cx, cy, r]`` in ``[0, 1]^2``.

    ``gaps`` records the corridor opening of each generated wall; it is
    metadata used by blob corruption and evaluation, never an obstacle.
    """

    walls: tuple = ()
    blobs: tuple = ()
    gaps: tuple = ()
    _rects: np.ndarray = field(init=False, repr=False, compare=False)
    _discs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        walls = tuple(tuple(float(v) for v in w) for w in self.walls)
        blobs = tuple(tuple(float(v) for v in b) for b in self.blobs)
        gaps = tuple(tuple(float(v) for v in g) for g in self.gaps)
        for w in walls:
            if not (w[0] < w[2] and w[1] < w[3]):
                raise DomainError(f"degenerate wall {w}")
        for b in blobs:
            if b[2] <= 0:
                raise DomainError(f"blob radius must be positive: {b}")
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "blobs", blobs)
        object.__setattr__(self, "gaps", gaps)
        object.__setattr__(self, "_rects", _as_rows(walls, 4))
        object.__setattr__(self, "_discs", _as_rows(blobs, 3))

    @property
    def rects(self):
        return self._rects

    @property
    def discs(self):
        return self._discs

    def to_dict(self):
        return {
            "walls": [list(w) for w in self.walls],
            "blobs": [list(b) for b in self.blobs],
            "gaps": [list(g) for g in self.gaps],
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(walls=doc.get("walls", ()), blobs=doc.get("blobs", ()), gaps=doc.get("gaps", ()))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PlanningProblem:
    world: object
    x_init: np.ndarray
    x_goal: np.ndarray

    def __post_init__(self):
        x_init = np.array(self.x_init, dtype=np.float64)
        x_goal = np.array(self.x_goal, dtype=np.float64)
        x_init.setflags(write=False)
        x_goal.setflags(write=False)
        object.__setattr__(self, "x_init", x_init)
        object.__setattr__(self, "x_goal", x_goal)
        if isinstance(self.world, World2D):
            if not (is_free(self.world, x_init) and is_free(self.world, x_goal)):
                raise DomainError("start and goal must be collision-free")


def generate_world(seed, n_walls, corridor_width, thickness=WALL_THICKNESS):
    """World with ``n_walls`` parallel walls, each spanning the square except
    for one gap of exactly ``corridor_width``.

    Orientation (all vertical or all horizontal) and wall/gap offsets come
    from ``seed``. Walls sit in disjoint strata of ``[0.15, 0.85]`` so they
    never touch.
    """
    if n_walls < 0:
        raise DomainError("n_walls must be >= 0")
    if not 0 < corridor_width < 1:
        raise DomainError("corridor_width must be in (0, 1)")
    rng = stream(seed, "world")
    if n_walls == 0:
        return World2D()
    vertical = bool(rng.integers(2))
    lo, hi = 0.15, 0.85
    band = (hi - lo) / n_walls
    if band <= thickness:
        raise DomainError("too many walls for the wall thickness")
    walls, gaps = [], []
    for i in range(n_walls):
        c = lo + i * band + rng.uniform(0.0, band - thickness)
        g = rng.uniform(0.05, 0.95 - corridor_width)
        pieces = [(0.0, g), (g + corridor_width, 1.0)]
        gap = (g, g + corridor_width)
        for a, b in pieces:
            walls.append((c, a, c + thickness, b) if vertical else (a, c, b, c + thickness))
        gaps.append((c, gap[0], c + thickness, gap[1]) if vertical else (gap[0], c, gap[1], c + thickness))
    return World2D(walls=walls, gaps=gaps)


def _check_in_bounds(p):
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 2 or np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError(f"point {p} outside [0, 1]^2")
    return p


def is_free(world, p):
    p = _check_in_bounds(p)
    return bool(kernels.points_free(p.reshape(1, 2), world.rects, world.discs)[0])


def points_free(world, points):
    """Vectorised :func:`is_free` over an ``(N, 2)`` array."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.shape[0] and (points.min() < 0.0 or points.max() > 1.0):
        raise DomainError("points outside [0, 1]^2")
    return kernels.points_free(points, world.rects, world.discs)


def _canonical_order(a, b):
    # lexicographically smaller endpoint first, so sampling is symmetric in (a, b)
    swap = (b[:, 0] < a[:, 0]) | ((b[:, 0] == a[:, 0]) & (b[:, 1] < a[:, 1]))
    a2 = np.where(swap[:, None], b, a)
    b2 = np.where(swap[:, None], a, b)
    return np.ascontiguousarray(a2), np.ascontiguousarray(b2)


def segments_free(world, a, b, step=DEFAULT_STEP):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    _check_in_bounds(a)
    _check_in_bounds(b)
    if step <= 0:
        raise DomainError("step must be positive")
    a, b = _canonical_order(a, b)
    return kernels.segments_free(a, b, world.rects, world.discs, float(step))


def segment_free(world, a, b, step=DEFAULT_STEP):
    """True iff samples spaced at most ``step`` along ``[a, b]``, endpoints
    included, are all free."""
    return bool(segments_free(world, a, b, step)[0])


def _disc_hits_rect(c, r, rect):
    qx = min(max(c[0], rect[0]), rect[2])
    qy = min(max(c[1], rect[1]), rect[3])
    return (c[0] - qx) ** 2 + (c[1] - qy) ** 2 <= r * r


def corrupt_with_blobs(world, seed, n_blobs, r_max, keep_free=(), max_tries=10_000):
    """Add ``n_blobs`` discs with radii in ``(0, r_max]``.

    A candidate disc is rejected if it touches any corridor gap or covers a
    point of ``keep_free`` (start, goal, ground-truth labels).
    """
    if n_blobs < 0 or r_max <= 0:
        raise DomainError("need n_blobs >= 0 and r_max > 0")
    if n_blobs == 0:
        return world
    rng = stream(seed, "blobs")
    keep = np.asarray(keep_free, dtype=np.float64).reshape(-1, 2)
    blobs = []
    tries = 0
    while len(blobs) < n_blobs:
        tries += 1
        if tries > max_tries:
            raise GenerationError(f"placed {len(blobs)}/{n_blobs} blobs in {max_tries} tries")
        c = rng.uniform(0.0, 1.0, size=2)
        r = r_max * (1.0 - rng.uniform())
        if any(_disc_hits_rect(c, r, g) for g in world.gaps):
            continue
        if keep.shape[0] and np.any(((keep - c) ** 2).sum(axis=1) <= r * r):
            continue
        blobs.append((c[0], c[1], r))
    return World2D(walls=world.walls, blobs=world.blobs + tuple(blobs), gaps=world.gaps)


def gap_is_vertical(world, gap):
    """True when ``gap`` opens a vertical wall (a wall piece sits directly
    above or below it)."""
    for w in world.walls:
        if w[0] == gap[0] and w[2] == gap[2] and (w[3] == gap[1] or w[1] == gap[3]):
            return True
    return False


def _side_codes(world, p):
    # For each wall: which side of it p lies on.
    codes = []
    for g in world.gaps:
        if gap_is_vertical(world, g):
            codes.append(bool(p[0] > g[2]))
        else:
            codes.append(bool(p[1] > g[3]))
    return codes


def sample_problem(world, rng, max_tries=10_000):
    """Random free start and goal; when the world has walls they lie on
    opposite sides of at least one of them, so the shortest path crosses a gap."""
    for _ in range(max_tries):
        a = rng.uniform(0.02, 0.98, size=2)
        b = rng.uniform(0.02, 0.98, size=2)
        if not (is_free(world, a) and is_free(world, b)):
            continue
        if world.gaps and _side_codes(world, a) == _side_codes(world, b):
            continue
        if np.linalg.norm(a - b) < 0.3:
            continue
        return PlanningProblem(world, a, b)
    raise GenerationError("could not sample a start/goal pair")
