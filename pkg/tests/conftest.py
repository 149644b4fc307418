# File: tests/conftest.py (Q2FMM)
import numpy as np
import pytest

from app.models import LatticeSpec, SynthesisOptions
from scripts.circuit import QubitAllocator
from scripts.hierarchy import build_hierarchy


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lattice4():
    return LatticeSpec(width=4)


@pytest.fixture
def h4(lattice4):
    return build_hierarchy(lattice4)


@pytest.fixture
def chain16():
    return LatticeSpec(width=16, dimension=1)


@pytest.fixture
def h_chain16(chain16):
    return build_hierarchy(chain16)


@pytest.fixture
def alloc():
    return QubitAllocator(0)


def system_occupations(n_modes: int, n_states: int, rng: np.random.Generator) -> np.ndarray:
    """Random 0/1 rows, always including the empty and the full state."""
    occ = rng.integers(0, 2, size=(n_states, n_modes))
    occ[0] = 0
    occ[-1] = 1
    return occ


def wrapped(delta: np.ndarray) -> np.ndarray:
    """Phase differences mapped into (-pi, pi]."""
    return np.angle(np.exp(1j * np.asarray(delta)))


def options(**kwargs) -> SynthesisOptions:
    return SynthesisOptions(**kwargs)
