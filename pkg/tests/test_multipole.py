# File: tests/test_multipole.py (Q2FMM)
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.models import LatticeSpec
from scripts.errors import MultipoleError, SeparationError, SingularityError
from scripts.hierarchy import build_hierarchy
from scripts.multipole import (FockState, SolidHarmonicIndex, aggregate_children, brute_force_energy,
                               compute_moments, coulomb_kernel, evolution_error_bound, fmm_error_sweep,
                               fmm_total_energy, irregular_solid_harmonic, irregular_table, iter_lm, lm_index,
                               order_for_tolerance, pair_energy, random_fock_state, regular_solid_harmonic,
                               regular_table, truncation_error_bound)
from scripts.fits import geometric_rate

coords = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


def test_low_order_harmonics():
    assert regular_solid_harmonic(SolidHarmonicIndex(0, 0), (1.0, 2.0, 3.0)) == pytest.approx(1.0)
    assert regular_solid_harmonic(SolidHarmonicIndex(1, 0), (0.0, 0.0, 2.0)) == pytest.approx(2.0)
    assert irregular_solid_harmonic(SolidHarmonicIndex(0, 0), (3.0, 4.0, 0.0)) == pytest.approx(0.2)


def test_harmonic_normalization_closed_forms():
    # R_l0 on the z axis is z^l / l!, R_ll on the x axis is (-x)^l / (2^l l!), I_l0 is l! / z^(l+1)
    p = 5
    along_z = regular_table(p, [(0.0, 0.0, 1.5)])[0]
    along_x = regular_table(p, [(1.2, 0.0, 0.0)])[0]
    inverse = irregular_table(p, [(0.0, 0.0, 2.0)])[0]
    for ell in range(p + 1):
        assert along_z[lm_index(ell, 0)] == pytest.approx(1.5 ** ell / math.factorial(ell))
        assert along_x[lm_index(ell, ell)] == pytest.approx((-1.2) ** ell / (2 ** ell * math.factorial(ell)))
        assert inverse[lm_index(ell, 0)] == pytest.approx(math.factorial(ell) / 2.0 ** (ell + 1))


def test_invalid_index_and_singularity():
    with pytest.raises(MultipoleError):
        SolidHarmonicIndex(1, 2)
    with pytest.raises(SingularityError):
        irregular_solid_harmonic(SolidHarmonicIndex(0, 0), (0.0, 0.0, 0.0))
    with pytest.raises(SingularityError):
        coulomb_kernel((1.0, 1.0), (1.0, 1.0))


@settings(max_examples=40, deadline=None)
@given(x=coords, y=coords, z=coords)
def test_negative_orders_are_conjugates(x, y, z):
    for ell, m in iter_lm(4):
        if m == 0:
            continue
        pos = regular_solid_harmonic(SolidHarmonicIndex(ell, m), (x, y, z))
        neg = regular_solid_harmonic(SolidHarmonicIndex(ell, -m), (x, y, z))
        assert neg == pytest.approx((-1) ** m * np.conj(pos), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(ax=coords, ay=coords, bx=coords, by=coords)
def test_addition_theorem(ax, ay, bx, by):
    p = 4
    a, b = np.array([ax, ay, 0.0]), np.array([bx, by, 0.0])
    total = regular_table(p, a + b)[0]
    for ell, m in iter_lm(p):
        expected = 0j
        for j in range(ell + 1):
            for k in range(-j, j + 1):
                if abs(m - k) <= ell - j:
                    expected += (regular_solid_harmonic(SolidHarmonicIndex(j, k), a)
                                 * regular_solid_harmonic(SolidHarmonicIndex(ell - j, m - k), b))
        idx = ell * (ell + 1) // 2 + m
        assert total[idx] == pytest.approx(expected, abs=1e-8 * (1.0 + abs(expected)))


@pytest.mark.parametrize("seed", range(10))
def test_m2m_translation_is_exact(seed):
    lattice = LatticeSpec(width=16)
    h = build_hierarchy(lattice)
    state = random_fock_state(lattice, np.random.default_rng(seed))
    p = 6
    for level in (1, 2, 3):
        for parent in h.boxes(level):
            direct = compute_moments(parent, state, p).coefficients
            children = [compute_moments(c, state, p) for c in h.children(parent)]
            translated = aggregate_children(children, parent).coefficients
            scale = max(1.0, float(np.abs(direct).max()))
            assert np.allclose(translated, direct, rtol=1e-10, atol=1e-10 * scale)


def test_aggregate_rejects_foreign_child(h4):
    state = FockState.from_sites(h4.lattice, [0, 5])
    stranger = compute_moments(h4.box((2, 3, 3)), state, 2)
    with pytest.raises(MultipoleError):
        aggregate_children([stranger], h4.box((1, 0, 0)))


def test_pair_energy_matches_kernel_far_away():
    lattice = LatticeSpec(width=16)
    h = build_hierarchy(lattice)
    state = FockState.from_sites(lattice, [lattice.site_index(0, 0), lattice.site_index(15, 15)])
    a, b = h.box((2, 0, 0)), h.box((2, 3, 3))
    ma, mb = compute_moments(a, state, 8), compute_moments(b, state, 8)
    r_ab = np.asarray(b.center) - np.asarray(a.center)
    assert pair_energy(ma, mb, r_ab, 8) == pytest.approx(1.0 / math.hypot(15, 15), rel=1e-4)
    with pytest.raises(SeparationError):
        pair_energy(ma, ma, (0.5, 0.0, 0.0), 2)


def test_trivial_energies(h4, lattice4):
    empty = FockState(lattice4, np.zeros(16, dtype=np.int64))
    assert brute_force_energy(empty) == 0.0
    assert fmm_total_energy(h4, empty, 3) == 0.0
    adjacent = FockState.from_sites(lattice4, [0, 1])
    assert brute_force_energy(adjacent) == 1.0
    assert fmm_total_energy(h4, adjacent, 0) == pytest.approx(1.0)


def test_all_direct_lattice_is_exact(h4, lattice4, rng):
    for _ in range(5):
        state = random_fock_state(lattice4, rng)
        assert fmm_total_energy(h4, state, 0) == pytest.approx(brute_force_energy(state), rel=1e-12)


def test_fock_state_validation(lattice4):
    with pytest.raises(MultipoleError):
        FockState(lattice4, np.zeros(15, dtype=np.int64))
    with pytest.raises(MultipoleError):
        FockState(lattice4, np.full(16, 2))
    limited = LatticeSpec(width=4, electron_count_Q=2)
    with pytest.raises(MultipoleError):
        FockState.from_sites(limited, [0, 1, 2])
    assert FockState.from_bits(lattice4, 0b101).to_bits() == 0b101


def test_error_decreases_with_order_on_8x8():
    lattice = LatticeSpec(width=8)
    rng = np.random.default_rng(7)
    states = [random_fock_state(lattice, rng) for _ in range(10)]
    rows = fmm_error_sweep(lattice, states, [1, 5])
    assert rows[1]["median_rel_error"] < rows[0]["median_rel_error"]
    with pytest.raises(MultipoleError):
        fmm_error_sweep(lattice, states[:5], [1])


@pytest.mark.slow
def test_geometric_convergence_16x16():
    lattice = LatticeSpec(width=16)
    h = build_hierarchy(lattice)
    rng = np.random.default_rng(0)
    states = [random_fock_state(lattice, rng) for _ in range(50)]
    orders = [1, 2, 3, 4, 5]
    rows = fmm_error_sweep(lattice, states, orders, h=h)
    medians = [r["median_rel_error"] for r in rows]
    assert all(later < earlier for earlier, later in zip(medians, medians[1:]))
    rate = geometric_rate(orders, medians)
    # interaction-list pairs at the finest multipole level: R = 4, r = sqrt(2) + sqrt(2)
    expected = math.log(2.0 * math.sqrt(2.0) / 4.0)
    assert rate < 0
    assert expected / 3.0 >= rate >= expected * 3.0


def test_truncation_bound_shrinks_with_order():
    h = build_hierarchy(LatticeSpec(width=8))
    low, high = truncation_error_bound(h, 1), truncation_error_bound(h, 4)
    assert low[3] == 0.0 and high[3] == 0.0
    assert 0.0 < high[2] < low[2]


def test_order_for_tolerance():
    assert order_for_tolerance(0.5, 0.125) == 2
    assert order_for_tolerance(0.5, 1.0) == 0
    with pytest.raises(MultipoleError):
        order_for_tolerance(1.5, 0.1)


def test_evolution_error_bound():
    amps = np.array([1.0, 1.0]) / math.sqrt(2.0)
    assert evolution_error_bound(amps, np.array([0.2, -0.4]), 0.5) == pytest.approx(0.15)
