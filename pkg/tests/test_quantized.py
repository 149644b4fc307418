# File: tests/test_quantized.py (Q2FMM)
import numpy as np
import pytest

from app.models import SynthesisOptions
from scripts.errors import SimulationCapError, SynthesisError
from scripts.multipole import FockState, brute_force_energy
from scripts.quantized import (all_basis_occupations, evaluate_plan, quantized_energy, quantized_phases)
from scripts.synthesizer import build_plan


def test_all_basis_occupations_little_endian():
    occ = all_basis_occupations(3)
    assert occ.shape == (8, 3)
    assert occ[5].tolist() == [1, 0, 1]
    assert occ[0].sum() == 0 and occ[7].sum() == 3


def test_all_basis_occupations_cap():
    with pytest.raises(SimulationCapError):
        all_basis_occupations(21)


def test_rejects_bad_occupations(h4):
    plan = build_plan(h4, SynthesisOptions())
    with pytest.raises(SimulationCapError):
        evaluate_plan(plan, np.zeros((2, 15), dtype=np.int64))
    with pytest.raises(SynthesisError):
        evaluate_plan(plan, np.full((1, 16), 2))


def test_direct_energy_is_exact(h4, lattice4):
    plan = build_plan(h4, SynthesisOptions(order_p=1))
    state = FockState.from_sites(lattice4, [0, 5, 6, 15])
    energy = quantized_energy(plan, state)
    assert energy.shape == (1,)
    assert energy[0] == pytest.approx(brute_force_energy(state), abs=1e-12)
    phase = quantized_phases(plan, state)[0]
    assert 0.0 <= phase < 2.0 * np.pi
    assert np.exp(1j * phase) == pytest.approx(np.exp(-1j * 0.1 * brute_force_energy(state)))
