"""Dartboard geometry: score map, regions, centers, and lattice discretization.

All distances are millimeters with the origin at the board center and y
pointing up.  Segment sectors span 18 degrees; the first segment in
``segment_order`` is centered on the positive y axis.  Boundary convention:
a radius exactly on a wire belongs to the inner band, an angle exactly on a
sector boundary belongs to the clockwise-later sector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

# Standard segment layout, clockwise starting from the top.
STANDARD_SEGMENT_ORDER = (20, 1, 18, 4, 13, 6, 10, 15, 2, 17, 3, 19, 7, 16, 8, 11, 14, 9, 12, 5)

# Bounding radius for lattices and Miss-region sampling.  Roughly 3 sigma
# beyond the double ring for any realistic skill spread; Gaussian mass
# outside is negligible.
BOARD_RADIUS_MM = 230.0

SECTOR_DEG = 18.0

SINGLE_LABELS = tuple(f"S{i}" for i in range(1, 21))
DOUBLE_LABELS = tuple(f"D{i}" for i in range(1, 21))
TREBLE_LABELS = tuple(f"T{i}" for i in range(1, 21))
MISS = "M"

#: All 63 outcome labels in canonical order.  Index into this tuple is the
#: canonical outcome index used by probability vectors everywhere.
OUTCOMES = SINGLE_LABELS + DOUBLE_LABELS + TREBLE_LABELS + ("SB", "DB", MISS)
OUTCOME_INDEX = {label: i for i, label in enumerate(OUTCOMES)}

#: The 62 aimable regions (everything except Miss).
TARGETS = OUTCOMES[:-1]

_SCORE_OF = {MISS: 0, "SB": 25, "DB": 50}
for _i in range(1, 21):
    _SCORE_OF[f"S{_i}"] = _i
    _SCORE_OF[f"D{_i}"] = 2 * _i
    _SCORE_OF[f"T{_i}"] = 3 * _i

_DOUBLES = frozenset(DOUBLE_LABELS) | {"DB"}


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class BoardSpec:
    """Board wire radii (mm) and segment layout.

    Radii are measured from the center to the outer wire of each band, so
    e.g. the treble bed is the annulus (r_treble_inner, r_treble_outer].
    """

    r_db: float = 6.35
    r_sb: float = 15.9
    r_treble_inner: float = 99.0
    r_treble_outer: float = 107.0
    r_double_inner: float = 162.0
    r_double_outer: float = 170.0
    segment_order: tuple[int, ...] = field(default=STANDARD_SEGMENT_ORDER)

    def __post_init__(self):
        radii = (self.r_db, self.r_sb, self.r_treble_inner, self.r_treble_outer,
                 self.r_double_inner, self.r_double_outer)
        if not all(a < b for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
            raise ValueError(f"radii must be strictly increasing and positive: {radii}")
        order = tuple(self.segment_order)
        if sorted(order) != list(range(1, 21)):
            raise ValueError("segment_order must be a permutation of 1..20")
        object.__setattr__(self, "segment_order", order)

    def to_json(self) -> str:
        return json.dumps({
            "r_db": self.r_db, "r_sb": self.r_sb,
            "r_treble_inner": self.r_treble_inner, "r_treble_outer": self.r_treble_outer,
            "r_double_inner": self.r_double_inner, "r_double_outer": self.r_double_outer,
            "segment_order": list(self.segment_order),
        })

    @classmethod
    def from_json(cls, text: str) -> "BoardSpec":
        raw = json.loads(text)
        return cls(
            r_db=raw["r_db"], r_sb=raw["r_sb"],
            r_treble_inner=raw["r_treble_inner"], r_treble_outer=raw["r_treble_outer"],
            r_double_inner=raw["r_double_inner"], r_double_outer=raw["r_double_outer"],
            segment_order=tuple(raw["segment_order"]),
        )

    def segment_position(self, number: int) -> int:
        """Index of a segment in the clockwise order (0 = top)."""
        return self.segment_order.index(number)

    def segment_center_angle(self, number: int) -> float:
        """Center angle of a segment's sector, radians, standard math convention."""
        return math.radians(90.0 - SECTOR_DEG * self.segment_position(number))

    def neighbors(self, number: int) -> tuple[int, int]:
        """The two adjacent segment numbers, larger number first."""
        pos = self.segment_position(number)
        a = self.segment_order[(pos - 1) % 20]
        b = self.segment_order[(pos + 1) % 20]
        return (a, b) if a > b else (b, a)


DEFAULT_BOARD = BoardSpec()


def numeric_score(outcome: str) -> int:
    """Points scored by an outcome: Sx->x, Dx->2x, Tx->3x, SB->25, DB->50, M->0."""
    return _SCORE_OF[outcome]


def is_double(outcome: str) -> bool:
    """True iff the outcome can end a leg (D1..D20 or DB)."""
    return outcome in _DOUBLES


def _segment_indices(theta: np.ndarray) -> np.ndarray:
    # Sector i covers angles in (c_i - 9, c_i + 9] degrees with c_i = 90 - 18i,
    # so an exact boundary falls to the clockwise-later sector.
    deg = np.degrees(theta)
    return np.floor((99.0 - deg) / SECTOR_DEG).astype(np.int64) % 20


def score_indices(x: np.ndarray, y: np.ndarray, spec: BoardSpec = DEFAULT_BOARD) -> np.ndarray:
    """Vectorized score map: canonical outcome index for each (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    seg_idx = _segment_indices(np.arctan2(y, x))
    seg_num = np.asarray(spec.segment_order, dtype=np.int64)[seg_idx]

    out = np.full(r.shape, OUTCOME_INDEX[MISS], dtype=np.int64)
    single = seg_num - 1
    double = 20 + seg_num - 1
    treble = 40 + seg_num - 1
    out = np.where(r <= spec.r_double_outer, double, out)
    out = np.where(r <= spec.r_double_inner, single, out)
    out = np.where(r <= spec.r_treble_outer, treble, out)
    out = np.where(r <= spec.r_treble_inner, single, out)
    out = np.where(r <= spec.r_sb, OUTCOME_INDEX["SB"], out)
    out = np.where(r <= spec.r_db, OUTCOME_INDEX["DB"], out)
    return out


def score_at(p: Point | tuple[float, float], spec: BoardSpec = DEFAULT_BOARD) -> str:
    """Outcome label of a dart landing at point p.  Total on the whole plane."""
    idx = score_indices(np.asarray([p[0]]), np.asarray([p[1]]), spec)[0]
    return OUTCOMES[idx]


def outcome_set(target: str, spec: BoardSpec = DEFAULT_BOARD) -> tuple[str, ...]:
    """Ordered realistic outcomes of a dart aimed at the given target region.

    Trebles: own treble/single plus both neighbors' (K=6).  Doubles: own
    double/single, neighbors' double/single, and Miss (K=7).  DB: the 22
    outcomes DB, SB, S1..S20.  Neighbor pairs are listed larger segment
    number first, matching the published data layout.
    """
    if target == "DB":
        return ("DB", "SB") + SINGLE_LABELS
    if target == "SB":
        return ("SB", "DB") + SINGLE_LABELS
    if target == MISS:
        raise ValueError("Miss is not a target region")
    kind, num = target[0], int(target[1:])
    n1, n2 = spec.neighbors(num)
    if kind == "T":
        return (f"T{num}", f"S{num}", f"T{n1}", f"S{n1}", f"T{n2}", f"S{n2}")
    if kind == "D":
        return (f"D{num}", f"S{num}", f"D{n1}", f"S{n1}", f"D{n2}", f"S{n2}", MISS)
    # Aiming at a single bed: both ring-mates of the own segment plus neighbors.
    return (f"S{num}", f"T{num}", f"S{n1}", f"T{n1}", f"S{n2}", f"T{n2}")


def region_center(target: str, spec: BoardSpec = DEFAULT_BOARD, *,
                  single_bed: str = "inner") -> Point:
    """Polar midpoint of a target region.

    DB is concentric, so its center is the origin.  SB is an annulus; the
    free angle is fixed to the first segment's center.  Single regions have
    two beds; the inner (larger) bed is used unless ``single_bed="outer"``.
    """
    if target == "DB":
        return Point(0.0, 0.0)
    if target == "SB":
        theta = spec.segment_center_angle(spec.segment_order[0])
        r = 0.5 * (spec.r_db + spec.r_sb)
        return Point(r * math.cos(theta), r * math.sin(theta))
    kind, num = target[0], int(target[1:])
    theta = spec.segment_center_angle(num)
    if kind == "T":
        r = 0.5 * (spec.r_treble_inner + spec.r_treble_outer)
    elif kind == "D":
        r = 0.5 * (spec.r_double_inner + spec.r_double_outer)
    elif single_bed == "inner":
        r = 0.5 * (spec.r_sb + spec.r_treble_inner)
    elif single_bed == "outer":
        r = 0.5 * (spec.r_treble_outer + spec.r_double_inner)
    else:
        raise ValueError(f"unknown single_bed {single_bed!r}")
    return Point(r * math.cos(theta), r * math.sin(theta))


def single_bed_centers(number: int, spec: BoardSpec = DEFAULT_BOARD) -> tuple[Point, Point]:
    """Centers of both disjoint beds of a single region (inner, outer)."""
    label = f"S{number}"
    return (region_center(label, spec, single_bed="inner"),
            region_center(label, spec, single_bed="outer"))


def region_components(outcome: str, spec: BoardSpec = DEFAULT_BOARD) -> list[tuple[float, float, float, float]]:
    """Analytic description of an outcome region as (r_lo, r_hi, th_lo, th_hi) pieces.

    Angles in radians; full-circle components use (0, 2*pi).  Miss is
    truncated to the BOARD_RADIUS_MM disk.  Single regions return both beds.
    """
    if outcome == "DB":
        return [(0.0, spec.r_db, 0.0, 2.0 * math.pi)]
    if outcome == "SB":
        return [(spec.r_db, spec.r_sb, 0.0, 2.0 * math.pi)]
    if outcome == MISS:
        return [(spec.r_double_outer, BOARD_RADIUS_MM, 0.0, 2.0 * math.pi)]
    kind, num = outcome[0], int(outcome[1:])
    c = spec.segment_center_angle(num)
    half = math.radians(SECTOR_DEG / 2.0)
    th_lo, th_hi = c - half, c + half
    if kind == "T":
        return [(spec.r_treble_inner, spec.r_treble_outer, th_lo, th_hi)]
    if kind == "D":
        return [(spec.r_double_inner, spec.r_double_outer, th_lo, th_hi)]
    return [(spec.r_sb, spec.r_treble_inner, th_lo, th_hi),
            (spec.r_treble_outer, spec.r_double_inner, th_lo, th_hi)]


def region_area(outcome: str, spec: BoardSpec = DEFAULT_BOARD) -> float:
    """Exact area (mm^2) of an outcome region (Miss truncated to the board disk)."""
    return sum(0.5 * (r2 ** 2 - r1 ** 2) * (t2 - t1)
               for r1, r2, t1, t2 in region_components(outcome, spec))


@lru_cache(maxsize=8)
def lattice(spec: BoardSpec, resolution: float):
    """Square lattice over [-R, R]^2 with per-cell outcome indices.

    Returns (xs, ys, labels) flat arrays; cell centers sit at half-steps so
    no cell center falls exactly on a wire.  Cached per (spec, resolution).
    """
    n = int(round(2.0 * BOARD_RADIUS_MM / resolution))
    coords = (np.arange(n) + 0.5) * resolution - BOARD_RADIUS_MM
    xs, ys = np.meshgrid(coords, coords, indexing="xy")
    xs = xs.ravel()
    ys = ys.ravel()
    return xs, ys, score_indices(xs, ys, spec)


def cells_of(outcome: str, resolution: float, spec: BoardSpec = DEFAULT_BOARD) -> np.ndarray:
    """Centers of all lattice cells whose center scores the given outcome.

    Returns an (n, 2) array; may be empty for resolutions too coarse to hit
    a thin region.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    xs, ys, labels = lattice(spec, float(resolution))
    mask = labels == OUTCOME_INDEX[outcome]
    return np.column_stack([xs[mask], ys[mask]])
