# File: tests/test_simulator.py (Q2FMM)
import numpy as np
import pytest

from app.models import LatticeSpec, SynthesisOptions
from scripts.circuit import QubitAllocator
from scripts.errors import SimulationCapError, SimulationModeError
from scripts.fixed_point import FixedPointFormat
from scripts.fits import loglog_slope
from scripts.hierarchy import build_hierarchy
from scripts.simulator import (Statevector, coulomb_phases, exact_evolution, hopping_bonds, hubbard_hamiltonian,
                               run_basis, run_basis_batch, run_statevector, trotter_error_sweep, trotter_step)
from scripts.synthesizer import EffectiveTime, synth_evo_gate, synthesize
from tests.conftest import wrapped


@pytest.fixture
def evo_circuit():
    alloc = QubitAllocator(0)
    ra = alloc.register("A", "system", FixedPointFormat(2, 0, False))
    rb = alloc.register("B", "system", FixedPointFormat(2, 0, False))
    return synth_evo_gate(ra, rb, EffectiveTime(0.3), alloc, level=2)


def test_statevector_matches_basis_mode_spinful():
    lattice = LatticeSpec(width=2, spinful=True, onsite_V0=0.5)
    c = synthesize(build_hierarchy(lattice), SynthesisOptions(spinful=True))
    rng = np.random.default_rng(7)
    amps = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    amps /= np.linalg.norm(amps)
    out = run_statevector(c, Statevector.from_system(c, amps))
    occ = ((np.arange(256)[:, None] >> np.arange(8)[None, :]) & 1)
    _, phases = run_basis_batch(c, occ)
    assert np.allclose(out.amplitudes, amps * np.exp(1j * phases), atol=1e-12)
    assert out.norm() == pytest.approx(1.0)


def test_statevector_restores_ancillae(evo_circuit):
    c = evo_circuit
    system = np.zeros(16, dtype=complex)
    system[:] = 0.25
    psi = Statevector.from_system(c, system)
    out = run_statevector(c, psi)
    nonzero = np.flatnonzero(np.abs(out.amplitudes) > 1e-12)
    assert np.all(nonzero < 16)
    for k in range(16):
        x, y = k & 3, k >> 2
        assert out.amplitudes[k] == pytest.approx(0.25 * np.exp(-1j * 0.3 * x * y))


def test_run_basis_single_input(evo_circuit):
    outcome = run_basis(evo_circuit, [1, 1, 1, 1])
    assert outcome.bits[:4] == (1, 1, 1, 1)
    assert not any(outcome.bits[4:])
    assert np.exp(1j * outcome.phase) == pytest.approx(np.exp(-1j * 0.3 * 9))


def test_statevector_caps(evo_circuit):
    psi = Statevector.basis(evo_circuit.n_qubits, 0)
    with pytest.raises(SimulationCapError):
        run_statevector(evo_circuit, psi, cap=2)
    with pytest.raises(SimulationModeError):
        run_statevector(evo_circuit, Statevector.basis(3, 0))
    with pytest.raises(SimulationModeError):
        Statevector(np.zeros(5, dtype=complex), 2)


def test_two_site_spectrum():
    lattice = LatticeSpec(width=2, dimension=1)
    assert hopping_bonds(lattice) == [(0, 1)]
    h = hubbard_hamiltonian(lattice).toarray()
    assert np.allclose(h, h.conj().T)
    assert np.allclose(np.linalg.eigvalsh(h), [-1.0, 0.0, 1.0, 1.0])


def test_hamiltonian_is_hermitian_spinful():
    h = hubbard_hamiltonian(LatticeSpec(width=2, spinful=True, onsite_V0=2.0))
    assert h.shape == (256, 256)
    assert abs(h - h.conj().T).max() < 1e-12


def test_hopping_bonds_open_boundaries():
    assert len(hopping_bonds(LatticeSpec(width=3))) == 12
    assert len(hopping_bonds(LatticeSpec(width=4))) == 24


def test_dense_cap():
    with pytest.raises(SimulationCapError):
        hubbard_hamiltonian(LatticeSpec(width=4))
    with pytest.raises(SimulationCapError):
        trotter_step(LatticeSpec(width=4), SynthesisOptions())


def test_exact_evolution_is_unitary():
    u = exact_evolution(LatticeSpec(width=2), 0.7)
    assert np.allclose(u @ u.conj().T, np.eye(16), atol=1e-12)


def test_zero_step_is_identity():
    lattice = LatticeSpec(width=2)
    assert np.array_equal(trotter_step(lattice, SynthesisOptions(), delta_t=0.0), np.eye(16, dtype=complex))


def test_coulomb_models_agree_on_2x2():
    lattice = LatticeSpec(width=2)
    opts = SynthesisOptions(delta_t=0.2, order_p=2)
    exact = coulomb_phases(lattice, opts, "exact")
    assert np.allclose(coulomb_phases(lattice, opts, "fmm"), exact, atol=1e-12)
    assert np.allclose(wrapped(coulomb_phases(lattice, opts, "circuit") - exact), 0.0, atol=1e-9)
    with pytest.raises(SimulationModeError):
        coulomb_phases(lattice, opts, "bogus")


def test_trotter_sweep_fmm_columns():
    rows = trotter_error_sweep(LatticeSpec(width=2), 0.1, [2, 4], n_samples=8, seed=1)
    assert [r["steps"] for r in rows] == [2, 4]
    for row in rows:
        assert row["fmm_error"] <= 1e-9
        assert row["fmm_phase_error"] <= 1e-9
    no_tree = trotter_error_sweep(LatticeSpec(width=3), 0.1, [2], n_samples=4, seed=1)
    assert no_tree[0]["fmm_error"] is None


@pytest.mark.slow
def test_fmm_error_shrinks_with_order_on_chain():
    # 8-site chain: small enough for the dense propagator, large enough for a level-2 interaction list
    lattice = LatticeSpec(width=8, dimension=1)
    errors = {}
    for p in (0, 2):
        (row,) = trotter_error_sweep(lattice, 1.0, [2], SynthesisOptions(order_p=p, eps_b=2.0 ** -14),
                                     n_samples=8, seed=1)
        errors[p] = row["fmm_error"]
        assert row["fmm_phase_error"] > 0.0
    assert errors[0] > 1e-4
    assert 0.0 < errors[2] < errors[0] / 2


@pytest.mark.slow
@pytest.mark.parametrize("order,expected", [(2, -2.0), (1, -1.0)])
def test_trotter_error_order(order, expected):
    steps = [4, 8, 16, 32, 64]
    rows = trotter_error_sweep(LatticeSpec(width=3), 0.1, steps, SynthesisOptions(trotter_order=order),
                               n_samples=20, seed=0)
    slope = loglog_slope(steps, [r["trotter_error"] for r in rows])
    assert slope == pytest.approx(expected, abs=0.3)
