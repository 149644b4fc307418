# File: tests/test_synthesizer.py (Q2FMM)
import numpy as np
import pytest

from app.models import LatticeSpec, SynthesisOptions
from scripts.errors import SynthesisError
from scripts.hierarchy import build_hierarchy
from scripts.multipole import FockState, fmm_total_energy
from scripts.quantized import all_basis_occupations, evaluate_plan, quantization_allowance
from scripts.simulator import coulomb_diagonal, coulomb_phases, onsite_diagonal, run_basis_batch
from scripts.synthesizer import (EffectiveTime, build_plan, direct_pair_order, effective_times, emit_circuit,
                                 synth_evo_gate, synth_higher, synth_spinful_adapter, synth_zeroth, synthesize)
from scripts.circuit import QubitAllocator
from scripts.fixed_point import FixedPointFormat
from tests.conftest import system_occupations, wrapped


def _check_against_oracle(h, opts, occ):
    """Circuit phases equal the quantized evaluation bit for bit and every ancilla returns to zero."""
    plan = build_plan(h, opts)
    c = emit_circuit(plan)
    bits, phases = run_basis_batch(c, occ)
    system = list(c.system_qubits)
    ancillae = [q for q in range(c.n_qubits) if q not in set(system)]
    assert np.array_equal(bits[:, system], occ)
    assert not bits[:, ancillae].any()
    expected, _ = evaluate_plan(plan, occ)
    assert np.array_equal(phases, expected)
    return plan, c, phases


def _energy_gap(plan, h, occ):
    _, quantized = evaluate_plan(plan, occ)
    analytic = np.array([fmm_total_energy(h, FockState(h.lattice, row), plan.opts.order_p) for row in occ])
    return np.abs(quantized - (analytic + onsite_diagonal(h.lattice, occ)))


@pytest.mark.parametrize("order_p", [0, 2])
def test_4x4_exhaustive_matches_oracle(h4, order_p):
    occ = all_basis_occupations(16)
    plan, _, _ = _check_against_oracle(h4, SynthesisOptions(order_p=order_p), occ)
    sample = occ[np.random.default_rng(0).choice(occ.shape[0], 300, replace=False)]
    assert _energy_gap(plan, h4, sample).max() <= quantization_allowance(plan) + 1e-9


def test_4x4_adder_layer(h4):
    c = synthesize(h4, SynthesisOptions())
    adders = [b for b in c.blocks if b.kind == "adder"]
    assert len(adders) == 4
    assert {b.level for b in adders} == {1}
    assert sum(b.kind == "adder_inverse" for b in c.blocks) == 4
    assert sum(b.kind == "direct" for b in c.blocks) == 120
    assert not any(b.kind in ("multiplier", "ladder") for b in c.blocks)


@pytest.mark.parametrize("order_p", [0, 2])
def test_4x4_level_one_merges_children(h4, rng, order_p):
    opts = SynthesisOptions(order_p=order_p)
    plan = build_plan(h4, opts)
    assert [lp.level for lp in plan.levels] == [1]
    assert not plan.levels[0].pairs
    assert len(plan.levels[0].parts) == 4
    assert len(plan.direct) == 120
    assert quantization_allowance(plan) == 0.0
    occ = system_occupations(16, 64, rng)
    _, c, phases = _check_against_oracle(h4, opts, occ)
    assert c.n_qubits > 16
    exact = -opts.delta_t * coulomb_diagonal(h4.lattice, occ)
    assert np.allclose(wrapped(phases - exact), 0.0, atol=1e-9)


def test_box_sums_take_every_mode_of_the_box(h4):
    plan = build_plan(h4, SynthesisOptions())
    ops = plan.levels[0].ops
    assert [op.kind for op in ops] == ["sum"] * 4
    assert all(len(op.args) == 4 for op in ops)
    assert plan.registers[ops[0].out].fmt == FixedPointFormat(3, 0, False)

    spinful = build_plan(build_hierarchy(LatticeSpec(width=4, spinful=True)), SynthesisOptions(spinful=True))
    assert all(len(op.args) == 8 for op in spinful.levels[0].ops)


def test_8x8_merges_down_to_four_boxes():
    plan = build_plan(build_hierarchy(LatticeSpec(width=8)), SynthesisOptions())
    assert [lp.level for lp in plan.levels] == [2, 1]
    assert plan.levels[0].pairs and not plan.levels[1].pairs
    assert all(len(op.args) == 4 for op in plan.levels[1].ops)


@pytest.mark.parametrize("order_p", [0, 1])
def test_chain_matches_oracle(h_chain16, rng, order_p):
    opts = SynthesisOptions(order_p=order_p)
    occ = system_occupations(16, 256, rng)
    plan, c, _ = _check_against_oracle(h_chain16, opts, occ)
    assert [lp.level for lp in plan.levels] == [3, 2]
    assert any(b.kind == "ladder" for b in c.blocks)
    assert _energy_gap(plan, h_chain16, occ[:40]).max() <= quantization_allowance(plan) + 1e-9


@pytest.mark.slow
@pytest.mark.parametrize("order_p", [0, 1])
def test_8x8_sampled_matches_oracle(order_p):
    h = build_hierarchy(LatticeSpec(width=8))
    occ = system_occupations(64, 200, np.random.default_rng(order_p))
    _check_against_oracle(h, SynthesisOptions(order_p=order_p), occ)


@pytest.mark.parametrize("use_fanout", [False, True])
def test_copy_does_not_change_phases(h_chain16, rng, use_fanout):
    occ = system_occupations(16, 200, rng)
    plain = synthesize(h_chain16, SynthesisOptions(order_p=1))
    copied = synthesize(h_chain16, SynthesisOptions(order_p=1, use_copy=True, use_fanout=use_fanout))
    assert any(b.kind == "copy" for b in copied.blocks)
    assert not any(b.kind == "copy" for b in plain.blocks)
    _, p_plain = run_basis_batch(plain, occ)
    bits, p_copied = run_basis_batch(copied, occ)
    assert np.array_equal(p_plain, p_copied)
    assert not bits[:, 16:].any()


@pytest.mark.slow
def test_copy_does_not_change_phases_8x8():
    h = build_hierarchy(LatticeSpec(width=8))
    occ = system_occupations(64, 200, np.random.default_rng(3))
    _, p_plain = run_basis_batch(synthesize(h, SynthesisOptions(order_p=1)), occ)
    _, p_copied = run_basis_batch(synthesize(h, SynthesisOptions(order_p=1, use_copy=True)), occ)
    assert np.array_equal(p_plain, p_copied)


def test_spinful_2x2_phases_and_onsite():
    lattice = LatticeSpec(width=2, spinful=True, onsite_V0=0.7)
    h = build_hierarchy(lattice)
    opts = SynthesisOptions(spinful=True, delta_t=0.1)
    c = synthesize(h, opts)
    occ = all_basis_occupations(8)
    _, phases = run_basis_batch(c, occ)
    exact = coulomb_phases(lattice, opts, "exact")
    assert np.allclose(wrapped(phases - exact), 0.0, atol=1e-9)

    bare = synthesize(build_hierarchy(LatticeSpec(width=2, spinful=True)), opts)
    _, bare_phases = run_basis_batch(bare, occ)
    doubles = (occ[:, 0::2] * occ[:, 1::2]).sum(axis=1)
    assert np.allclose(wrapped(phases - bare_phases + 0.7 * 0.1 * doubles), 0.0, atol=1e-9)


def test_spinful_adapter():
    lattice = LatticeSpec(width=2, spinful=True, onsite_V0=1.0)
    h = build_hierarchy(lattice)
    plan = build_plan(h, SynthesisOptions(spinful=True))
    bare = emit_circuit(plan)
    assert not any(b.kind == "onsite" for b in bare.blocks)
    adapted = synth_spinful_adapter(bare, lattice, 0.1)
    assert sum(b.kind == "onsite" for b in adapted.blocks) == 4
    occ = all_basis_occupations(8)
    _, phases = run_basis_batch(adapted, occ)
    expected, _ = evaluate_plan(plan, occ)
    assert np.array_equal(phases, expected)
    with pytest.raises(SynthesisError):
        synth_spinful_adapter(adapted, lattice, 0.1)
    with pytest.raises(SynthesisError):
        synth_spinful_adapter(bare, LatticeSpec(width=2), 0.1)
    with pytest.raises(SynthesisError):
        build_plan(h, SynthesisOptions(spinful=False))


def test_entry_point_dispatch(h_chain16):
    with pytest.raises(SynthesisError):
        synth_zeroth(h_chain16, SynthesisOptions(order_p=1))
    with pytest.raises(SynthesisError):
        synth_higher(h_chain16, SynthesisOptions(order_p=0))


def test_effective_times_and_direct_order(h4):
    times = effective_times(h4, 0.2)
    a, b = h4.box((2, 0, 0)), h4.box((2, 3, 0))
    assert times[(a.key, b.key)].value == pytest.approx(0.2 / 3.0)
    with pytest.raises(SynthesisError):
        effective_times(h4, 0.0)
    with pytest.raises(SynthesisError):
        EffectiveTime(-1.0)
    order = direct_pair_order(h4)
    assert len(order) == 120
    assert len({(x.key, y.key) for x, y in order}) == 120


def test_evo_gate_phase():
    alloc = QubitAllocator(0)
    ra = alloc.register("A", "box_sum", FixedPointFormat(2, 0, False))
    rb = alloc.register("B", "box_sum", FixedPointFormat(2, 0, False))
    c = synth_evo_gate(ra, rb, EffectiveTime(0.25), alloc, level=2)
    rows = np.array([[(x >> k) & 1 for k in range(2)] + [(y >> k) & 1 for k in range(2)]
                     + [0] * (c.n_qubits - 4) for x in range(4) for y in range(4)], dtype=np.uint8)
    bits, phases = run_basis_batch(c, rows)
    expected = np.array([-0.25 * x * y for x in range(4) for y in range(4)])
    assert np.allclose(wrapped(phases - expected), 0.0, atol=1e-12)
    assert np.array_equal(bits, rows)


def test_cutoff_removes_far_levels(h_chain16):
    full = build_plan(h_chain16, SynthesisOptions(order_p=1))
    cut = build_plan(h_chain16, SynthesisOptions(order_p=1, xi=5.0))
    assert sum(len(lp.pairs) for lp in cut.levels) < sum(len(lp.pairs) for lp in full.levels)
