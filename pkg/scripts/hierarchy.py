# File: scripts/hierarchy.py (Q2FMM)
"""
Quadtree coarse-graining of the lattice.

Level 0 is the root box covering the whole lattice, level L_max = log2(width)
holds one site per box. Box keys are (level, i, j) with i the column and j the
row of the box inside its level; 1D chains use j = 0 and two children per box.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from app.models import LatticeSpec
from scripts.errors import HierarchyError

logger = logging.getLogger(__name__)

BoxKey = Tuple[int, int, int]


@dataclass(frozen=True)
class Box:
    level: int
    index: Tuple[int, int]
    center: Tuple[float, float, float]
    radius: float

    @property
    def key(self) -> BoxKey:
        return (self.level, self.index[0], self.index[1])


@dataclass(frozen=True, eq=False)
class BoxHierarchy:
    lattice: LatticeSpec
    levels: Tuple[Tuple[Box, ...], ...]
    near: Dict[BoxKey, Tuple[BoxKey, ...]]
    interactions: Dict[BoxKey, Tuple[BoxKey, ...]]
    xi: Optional[float] = None
    index_by_key: Dict[BoxKey, Box] = field(default_factory=dict, repr=False)

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    @property
    def branching(self) -> int:
        return 2 if self.lattice.dimension == 1 else 4

    def box(self, key: BoxKey) -> Box:
        return self.index_by_key[key]

    def boxes(self, level: int) -> Tuple[Box, ...]:
        return self.levels[level]

    def parent(self, box: Box) -> Optional[Box]:
        if box.level == 0:
            return None
        i, j = box.index
        return self.index_by_key[(box.level - 1, i // 2, j // 2)]

    def children(self, box: Box) -> List[Box]:
        if box.level == self.max_level:
            return []
        i, j = box.index
        level = box.level + 1
        rows = (0,) if self.lattice.dimension == 1 else (0, 1)
        return [self.index_by_key[(level, 2 * i + di, 2 * j + dj)] for dj in rows for di in (0, 1)]

    def side(self, level: int) -> int:
        return self.lattice.width >> level


def _grid_shape(lattice: LatticeSpec, level: int) -> Tuple[int, int]:
    per_side = 1 << level
    return per_side, (1 if lattice.dimension == 1 else per_side)


def _make_box(lattice: LatticeSpec, level: int, i: int, j: int) -> Box:
    s = lattice.width >> level
    cx = (i + 0.5) * s - 0.5
    if lattice.dimension == 1:
        return Box(level=level, index=(i, 0), center=(cx, 0.0, 0.0), radius=s / 2.0)
    cy = (j + 0.5) * s - 0.5
    return Box(level=level, index=(i, j), center=(cx, cy, 0.0), radius=s * math.sqrt(2.0) / 2.0)


def _adjacent(lattice: LatticeSpec, key: BoxKey) -> Tuple[BoxKey, ...]:
    level, i, j = key
    nx, ny = _grid_shape(lattice, level)
    out = []
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            ii, jj = i + di, j + dj
            if 0 <= ii < nx and 0 <= jj < ny:
                out.append((level, ii, jj))
    return tuple(sorted(out))


def build_hierarchy(lattice: LatticeSpec) -> BoxHierarchy:
    """
    Builds every level of the box hierarchy together with near fields and
    interaction lists.

    Args:
        lattice (LatticeSpec): square lattice (or chain) with power-of-two width.

    Returns:
        BoxHierarchy: immutable hierarchy, safe to share across workers.
    """
    if not lattice.is_power_of_two or lattice.width < 2:
        raise HierarchyError(
            f"lattice width {lattice.width} is not a power of two >= 2; "
            f"the box hierarchy halves the box side at every level"
        )

    levels: List[Tuple[Box, ...]] = []
    by_key: Dict[BoxKey, Box] = {}
    for level in range(lattice.max_level + 1):
        nx, ny = _grid_shape(lattice, level)
        row = tuple(_make_box(lattice, level, i, j) for j in range(ny) for i in range(nx))
        for b in row:
            by_key[b.key] = b
        levels.append(row)

    near: Dict[BoxKey, Tuple[BoxKey, ...]] = {}
    interactions: Dict[BoxKey, Tuple[BoxKey, ...]] = {}
    for row in levels:
        for b in row:
            near[b.key] = _adjacent(lattice, b.key)

    for row in levels:
        for b in row:
            level, i, j = b.key
            if level < 2:
                interactions[b.key] = ()
                continue
            own_near = set(near[b.key])
            parent_key = (level - 1, i // 2, j // 2)
            found = set()
            for pk in near[parent_key]:
                _, pi, pj = pk
                child_rows = (0,) if lattice.dimension == 1 else (0, 1)
                for dj in child_rows:
                    for di in (0, 1):
                        ck = (level, 2 * pi + di, 2 * pj + dj)
                        if ck not in own_near and ck != b.key:
                            found.add(ck)
            interactions[b.key] = tuple(sorted(found))

    h = BoxHierarchy(lattice=lattice, levels=tuple(levels), near=near,
                     interactions=interactions, index_by_key=by_key)
    logger.info(f"✅ Built hierarchy for {lattice.width}x{lattice.rows} lattice: "
                f"{len(levels)} levels, {len(by_key)} boxes")
    return h


def near_field(h: BoxHierarchy, box: Box) -> List[Box]:
    return [h.box(k) for k in h.near[box.key]]


def interaction_list(h: BoxHierarchy, box: Box) -> List[Box]:
    """Children of the parent's neighbors that are not neighbors of `box`."""
    return [h.box(k) for k in h.interactions[box.key]]


def box_sites(h: BoxHierarchy, box: Box) -> np.ndarray:
    """Row-major site indices covered by `box`, in ascending order."""
    lattice = h.lattice
    s = h.side(box.level)
    i, j = box.index
    xs = np.arange(i * s, (i + 1) * s)
    if lattice.dimension == 1:
        return xs
    ys = np.arange(j * s, (j + 1) * s)
    return (ys[:, None] * lattice.width + xs[None, :]).ravel()


def lattice_positions(lattice: LatticeSpec) -> np.ndarray:
    """(n_sites, 3) coordinates; z is always zero."""
    idx = np.arange(lattice.n_sites)
    pos = np.zeros((lattice.n_sites, 3))
    pos[:, 0] = idx % lattice.width
    pos[:, 1] = idx // lattice.width
    return pos


def center_distance(a: Box, b: Box) -> float:
    return math.dist(a.center, b.center)


def well_separated_pairs(h: BoxHierarchy, level: int) -> List[Tuple[Box, Box]]:
    """Unordered interaction-list pairs at `level`, each once, A before B by key."""
    pairs = []
    for a in h.boxes(level):
        for bk in h.interactions[a.key]:
            if a.key < bk:
                pairs.append((a, h.box(bk)))
    return pairs


def finest_near_pairs(h: BoxHierarchy) -> List[Tuple[Box, Box]]:
    pairs = []
    for a in h.boxes(h.max_level):
        for bk in h.near[a.key]:
            if a.key < bk:
                pairs.append((a, h.box(bk)))
    return pairs


def iter_pair_levels(h: BoxHierarchy) -> Iterator[Tuple[int, List[Tuple[Box, Box]]]]:
    """(level, pairs) for every level that still carries interaction pairs, finest first."""
    for level in range(h.max_level, 1, -1):
        pairs = well_separated_pairs(h, level)
        if pairs:
            yield level, pairs


def surviving_levels(h: BoxHierarchy) -> List[int]:
    """Levels with work to do: any level with interaction pairs, plus the finest near field."""
    levels = {level for level, _ in iter_pair_levels(h)}
    levels.add(h.max_level)
    return sorted(levels)


def pair_multiplicity(h: BoxHierarchy) -> np.ndarray:
    """Upper-triangular (N, N) count of how often each site pair is covered."""
    n = h.lattice.n_sites
    counts = np.zeros((n, n), dtype=np.int32)

    def _add(a: Box, b: Box):
        sa, sb = box_sites(h, a), box_sites(h, b)
        lo = np.minimum(sa[:, None], sb[None, :])
        hi = np.maximum(sa[:, None], sb[None, :])
        np.add.at(counts, (lo.ravel(), hi.ravel()), 1)

    for _, pairs in iter_pair_levels(h):
        for a, b in pairs:
            _add(a, b)
    for a, b in finest_near_pairs(h):
        _add(a, b)
    return counts


def covered_pairs(h: BoxHierarchy) -> Counter:
    """
    Multiset of unordered site pairs (a < b) produced by expanding every
    interaction-list box pair plus the finest-level near field.
    """
    counts = pair_multiplicity(h)
    rows, cols = np.nonzero(counts)
    return Counter({(int(a), int(b)): int(counts[a, b]) for a, b in zip(rows, cols)})


def level_cutoff(h: BoxHierarchy, xi: float) -> BoxHierarchy:
    """
    Drops interaction pairs whose box centers are farther apart than `xi`
    (inclusive cutoff). The finest-level near field is always kept, so
    xi >= the lattice diagonal leaves the hierarchy unchanged.
    """
    if xi < 1.0:
        raise HierarchyError(f"cutoff xi={xi} is below the nearest-neighbor spacing 1")

    kept: Dict[BoxKey, Tuple[BoxKey, ...]] = {}
    for key, partners in h.interactions.items():
        a = h.box(key)
        kept[key] = tuple(k for k in partners if center_distance(a, h.box(k)) <= xi)
    truncated = replace(h, interactions=kept, xi=xi)
    logger.info(f"Level cutoff xi={xi}: surviving levels {surviving_levels(truncated)}")
    return truncated


def dump_hierarchy(h: BoxHierarchy) -> str:
    """One JSON record per box, sorted keys, boxes in (level, j, i) order."""
    lines = []
    for row in h.levels:
        for b in row:
            record = {
                "level": b.level,
                "index": list(b.index),
                "center": [round(c, 12) for c in b.center[:2]],
                "radius": round(b.radius, 12),
                "near_field": [list(k) for k in h.near[b.key]],
                "interaction_list": [list(k) for k in h.interactions[b.key]],
            }
            lines.append(json.dumps(record, sort_keys=True))
    return "\n".join(lines) + "\n"
