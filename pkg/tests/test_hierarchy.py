# File: tests/test_hierarchy.py (Q2FMM)
import json
import math

import numpy as np
import pytest

from app.models import LatticeSpec
from scripts.errors import HierarchyError
from scripts.hierarchy import (box_sites, build_hierarchy, covered_pairs, dump_hierarchy, finest_near_pairs,
                               interaction_list, lattice_positions, level_cutoff, near_field, surviving_levels,
                               well_separated_pairs)


def _assert_partition(h):
    n = h.lattice.n_sites
    pairs = covered_pairs(h)
    assert len(pairs) == n * (n - 1) // 2
    assert set(pairs.values()) == {1}


def test_level_box_counts(h4):
    assert [len(row) for row in h4.levels] == [1, 4, 16]
    assert h4.max_level == 2


@pytest.mark.parametrize("width", [3, 6, 12])
def test_non_power_of_two_width_rejected(width):
    with pytest.raises(HierarchyError):
        build_hierarchy(LatticeSpec(width=width))


@pytest.mark.parametrize("width", [2, 4, 8, 16])
def test_pairs_covered_exactly_once(width):
    _assert_partition(build_hierarchy(LatticeSpec(width=width)))


@pytest.mark.slow
def test_pairs_covered_exactly_once_32x32():
    _assert_partition(build_hierarchy(LatticeSpec(width=32)))


def test_interaction_list_bound_attained_at_16x16():
    h = build_hierarchy(LatticeSpec(width=16))
    sizes = {level: max(len(h.interactions[b.key]) for b in h.boxes(level)) for level in range(h.max_level + 1)}
    assert max(sizes.values()) == 27
    assert sizes[3] == 27 and sizes[4] == 27
    assert sizes[0] == sizes[1] == 0


def test_interaction_list_members_are_separated(h4):
    for level in range(2, h4.max_level + 1):
        for box in h4.boxes(level):
            near = {b.key for b in near_field(h4, box)}
            for other in interaction_list(h4, box):
                assert other.key not in near
                assert h4.parent(other).key in {h4.parent(box).key} | set(h4.near[h4.parent(box).key])
                assert max(abs(other.index[0] - box.index[0]), abs(other.index[1] - box.index[1])) >= 2


def test_interaction_lists_are_symmetric():
    h = build_hierarchy(LatticeSpec(width=8))
    for key, partners in h.interactions.items():
        for other in partners:
            assert key in h.interactions[other]


def test_chain_hierarchy(chain16, h_chain16):
    assert [len(row) for row in h_chain16.levels] == [1, 2, 4, 8, 16]
    assert max(len(v) for v in h_chain16.near.values()) <= 2
    assert max(len(v) for v in h_chain16.interactions.values()) <= 3
    _assert_partition(h_chain16)


def test_box_sites_and_positions(h4):
    root = h4.boxes(0)[0]
    assert box_sites(h4, root).tolist() == list(range(16))
    corner = h4.box((1, 1, 0))
    assert box_sites(h4, corner).tolist() == [2, 3, 6, 7]
    pos = lattice_positions(h4.lattice)
    assert pos[6].tolist() == [2.0, 1.0, 0.0]
    assert corner.center == (2.5, 0.5, 0.0)
    assert corner.radius == pytest.approx(math.sqrt(2.0))


def test_well_separated_pairs_are_ordered():
    h = build_hierarchy(LatticeSpec(width=8))
    pairs = well_separated_pairs(h, 2)
    assert pairs
    assert all(a.key < b.key for a, b in pairs)
    assert len({(a.key, b.key) for a, b in pairs}) == len(pairs)


def test_level_cutoff():
    h = build_hierarchy(LatticeSpec(width=8))
    assert level_cutoff(h, 100.0).interactions == h.interactions
    short = level_cutoff(h, 2.0)
    assert surviving_levels(short) == [3]
    assert len(finest_near_pairs(short)) == len(finest_near_pairs(h))
    with pytest.raises(HierarchyError):
        level_cutoff(h, 0.5)


def test_dump_is_deterministic(h4):
    text = dump_hierarchy(h4)
    assert text == dump_hierarchy(build_hierarchy(LatticeSpec(width=4)))
    records = [json.loads(line) for line in text.splitlines()]
    assert len(records) == 21
    assert records[0]["level"] == 0 and records[0]["interaction_list"] == []
    assert np.isclose(records[0]["radius"], 2.0 * math.sqrt(2.0))
