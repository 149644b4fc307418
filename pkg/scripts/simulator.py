# File: scripts/simulator.py (Q2FMM)
"""
Simulation backends.

Basis mode pushes computational basis states through the classical gates and
accumulates the diagonal phase gate by gate; it scales to thousands of qubits.
Statevector mode is the exact check for small circuits (little-endian: qubit q
is bit q of the amplitude index). The dense Hubbard Hamiltonian and its exact
evolution are the reference for Trotter error studies on up to
DENSE_MODE_CAP modes.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse

from app.config import DENSE_MODE_CAP, STATEVECTOR_QUBIT_CAP
from app.models import LatticeSpec, SynthesisOptions
from scripts.circuit import Circuit
from scripts.errors import SimulationCapError, SimulationModeError
from scripts.hierarchy import build_hierarchy, lattice_positions
from scripts.multipole import FockState, fmm_total_energy
from scripts.synthesizer import synthesize

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
BASIS_GATES = frozenset({"NOT", "CNOT", "TOFFOLI", "SWAP", "FANOUT", "PHASE", "CPHASE"})


def _check_basis_kinds(c: Circuit):
    kinds = set(c.gate_counts())
    unsupported = kinds - BASIS_GATES
    if unsupported:
        raise SimulationModeError(
            f"basis mode needs classical or diagonal gates, circuit contains {sorted(unsupported)}"
        )


# === Basis mode ===
@dataclass(frozen=True)
class BasisOutcome:
    bits: Tuple[int, ...]
    phase: float

    @property
    def value(self) -> int:
        return sum(b << q for q, b in enumerate(self.bits))

    def register_value(self, qubits: Sequence[int]) -> int:
        return sum(self.bits[q] << n for n, q in enumerate(qubits))


def input_bits(c: Circuit, bits: Union[int, Sequence[int]]) -> List[int]:
    """
    Expands the input to one bit per circuit qubit. An integer or a sequence
    shorter than the circuit fills the system register; everything else starts at 0.
    """
    n = c.n_qubits
    system = c.system_qubits
    if isinstance(bits, (int, np.integer)):
        raw = [(int(bits) >> k) & 1 for k in range(len(system))]
        if int(bits) >> len(system):
            raise SimulationModeError(f"input {bits} does not fit the {len(system)}-qubit system register")
    else:
        raw = [int(b) for b in bits]
    if any(b not in (0, 1) for b in raw):
        raise SimulationModeError("basis input bits must be 0 or 1")
    if len(raw) == n:
        return raw
    if len(raw) != len(system):
        raise SimulationModeError(
            f"input has {len(raw)} bits, expected {len(system)} (system) or {n} (all qubits)"
        )
    full = [0] * n
    for q, b in zip(system, raw):
        full[q] = b
    return full


def run_basis(c: Circuit, bits: Union[int, Sequence[int]]) -> BasisOutcome:
    """Runs one basis state; phase is accumulated in gate order and reduced mod 2 pi at the end."""
    _check_basis_kinds(c)
    s = input_bits(c, bits)
    phase = 0.0
    for g in c.gates():
        q = g.qubits
        kind = g.kind
        if kind == "NOT":
            s[q[0]] ^= 1
        elif kind == "CNOT":
            s[q[1]] ^= s[q[0]]
        elif kind == "TOFFOLI":
            s[q[2]] ^= s[q[0]] & s[q[1]]
        elif kind == "SWAP":
            s[q[0]], s[q[1]] = s[q[1]], s[q[0]]
        elif kind == "FANOUT":
            if s[q[0]]:
                for t in q[1:]:
                    s[t] ^= 1
        elif kind == "PHASE":
            if s[q[0]]:
                phase = phase + g.angle
        elif kind == "CPHASE":
            if s[q[0]] & s[q[1]]:
                phase = phase + g.angle
    return BasisOutcome(bits=tuple(s), phase=float(np.mod(phase, TWO_PI)))


def run_basis_batch(c: Circuit, inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized basis mode over many inputs.

    Args:
        inputs (np.ndarray): (n_states, n_system) or (n_states, n_qubits) array of 0/1.

    Returns:
        (bits, phases): (n_states, n_qubits) uint8 outputs and phases in [0, 2 pi).
    """
    _check_basis_kinds(c)
    inputs = np.atleast_2d(np.asarray(inputs))
    n_states = inputs.shape[0]
    n = c.n_qubits
    system = list(c.system_qubits)
    s = np.zeros((n, n_states), dtype=np.uint8)
    if inputs.shape[1] == n:
        s[:] = inputs.T
    elif inputs.shape[1] == len(system):
        s[system] = inputs.T
    else:
        raise SimulationModeError(
            f"inputs have {inputs.shape[1]} columns, expected {len(system)} (system) or {n} (all qubits)"
        )
    phase = np.zeros(n_states)
    for block in c.blocks:
        qmap = block.qubits
        for g in block.template.gates:
            q = [qmap[k] for k in g.qubits]
            kind = g.kind
            if kind == "NOT":
                s[q[0]] ^= 1
            elif kind == "CNOT":
                s[q[1]] ^= s[q[0]]
            elif kind == "TOFFOLI":
                s[q[2]] ^= s[q[0]] & s[q[1]]
            elif kind == "SWAP":
                s[[q[0], q[1]]] = s[[q[1], q[0]]]
            elif kind == "FANOUT":
                s[q[1:]] ^= s[q[0]]
            elif kind == "PHASE":
                phase = phase + g.angle * s[q[0]]
            elif kind == "CPHASE":
                phase = phase + g.angle * (s[q[0]] & s[q[1]])
    return s.T.copy(), np.mod(phase, TWO_PI)


def system_phases(c: Circuit, occupations: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Circuit phase for every occupation row, in chunks to bound memory."""
    occupations = np.atleast_2d(occupations)
    out = np.empty(occupations.shape[0])
    for start in range(0, occupations.shape[0], chunk):
        _, phases = run_basis_batch(c, occupations[start:start + chunk])
        out[start:start + chunk] = phases
    return out


# === Statevector mode ===
@dataclass(frozen=True, eq=False)
class Statevector:
    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise SimulationModeError(
                f"statevector of length {self.amplitudes.shape} does not match {self.n_qubits} qubits"
            )

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "Statevector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps, n_qubits)

    @classmethod
    def from_system(cls, c: Circuit, system_amplitudes: np.ndarray) -> "Statevector":
        """Embeds a system-register state; every ancilla starts in |0>."""
        n = c.n_qubits
        _check_cap(n)
        system = c.system_qubits
        if system_amplitudes.shape != (1 << len(system),):
            raise SimulationModeError("system amplitudes do not match the system register width")
        idx = np.arange(1 << len(system))
        full_idx = np.zeros_like(idx)
        for k, q in enumerate(system):
            full_idx |= ((idx >> k) & 1) << q
        amps = np.zeros(1 << n, dtype=complex)
        amps[full_idx] = system_amplitudes
        return cls(amps, n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _check_cap(n_qubits: int, cap: Optional[int] = None):
    cap = STATEVECTOR_QUBIT_CAP if cap is None else cap
    if n_qubits > cap:
        raise SimulationCapError(f"statevector mode is capped at {cap} qubits, circuit has {n_qubits}")


def run_statevector(c: Circuit, psi: Statevector, cap: Optional[int] = None) -> Statevector:
    """Applies every gate to the amplitudes; classical gates permute indices, phase gates rescale."""
    _check_cap(c.n_qubits, cap)
    if psi.n_qubits != c.n_qubits:
        raise SimulationModeError(f"state has {psi.n_qubits} qubits, circuit has {c.n_qubits}")
    amps = psi.amplitudes.copy()
    idx = np.arange(amps.shape[0], dtype=np.int64)
    for g in c.gates():
        q = g.qubits
        kind = g.kind
        if kind == "PHASE":
            amps = np.where((idx >> q[0]) & 1, amps * np.exp(1j * g.angle), amps)
            continue
        if kind == "CPHASE":
            amps = np.where((idx >> q[0]) & (idx >> q[1]) & 1, amps * np.exp(1j * g.angle), amps)
            continue
        if kind == "NOT":
            src = idx ^ (1 << q[0])
        elif kind == "CNOT":
            src = idx ^ (((idx >> q[0]) & 1) << q[1])
        elif kind == "TOFFOLI":
            src = idx ^ (((idx >> q[0]) & (idx >> q[1]) & 1) << q[2])
        elif kind == "SWAP":
            d = ((idx >> q[0]) ^ (idx >> q[1])) & 1
            src = idx ^ ((d << q[0]) | (d << q[1]))
        elif kind == "FANOUT":
            mask = 0
            for t in q[1:]:
                mask |= 1 << t
            src = idx ^ (((idx >> q[0]) & 1) * mask)
        else:
            raise SimulationModeError(f"unsupported gate kind '{kind}'")
        amps = amps[src]
    return Statevector(amps, psi.n_qubits)


# === Dense Hubbard oracles ===
def _check_dense(lattice: LatticeSpec):
    if lattice.n_modes > DENSE_MODE_CAP:
        raise SimulationCapError(
            f"dense Hamiltonian is capped at {DENSE_MODE_CAP} modes, lattice has {lattice.n_modes}"
        )


def hopping_bonds(lattice: LatticeSpec) -> List[Tuple[int, int]]:
    """Nearest-neighbor site pairs with open boundaries, row-major sites."""
    bonds = []
    for y in range(lattice.rows):
        for x in range(lattice.width):
            s = lattice.site_index(x, y)
            if x + 1 < lattice.width:
                bonds.append((s, lattice.site_index(x + 1, y)))
            if y + 1 < lattice.rows:
                bonds.append((s, lattice.site_index(x, y + 1)))
    return bonds


def basis_occupations(n_modes: int) -> np.ndarray:
    idx = np.arange(1 << n_modes, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n_modes)[None, :]) & 1).astype(np.int64)


def site_charges(lattice: LatticeSpec, occupations: np.ndarray) -> np.ndarray:
    occ = np.atleast_2d(occupations)
    return occ.reshape(occ.shape[0], lattice.n_sites, lattice.modes_per_site).sum(axis=2)


def coulomb_diagonal(lattice: LatticeSpec, occupations: np.ndarray) -> np.ndarray:
    """Exact 1/r Coulomb energy per row of occupations (distinct sites only)."""
    pos = lattice_positions(lattice)
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    kernel = np.zeros_like(dist)
    off = dist > 0
    kernel[off] = 1.0 / dist[off]
    q = site_charges(lattice, occupations).astype(float)
    return 0.5 * np.einsum("si,ij,sj->s", q, kernel, q)


def onsite_diagonal(lattice: LatticeSpec, occupations: np.ndarray) -> np.ndarray:
    if not lattice.spinful:
        return np.zeros(np.atleast_2d(occupations).shape[0])
    occ = np.atleast_2d(occupations)
    return lattice.onsite_V0 * (occ[:, 0::2] * occ[:, 1::2]).sum(axis=1).astype(float)


def hubbard_hamiltonian(lattice: LatticeSpec, terms: Sequence[str] = ("hopping", "onsite", "coulomb")) -> sparse.csr_matrix:
    """
    Jordan-Wigner matrix of the extended Hubbard Hamiltonian over 2^n_modes basis states.
    Modes are ordered site-major (spin fastest); hopping preserves spin.
    """
    _check_dense(lattice)
    n = lattice.n_modes
    dim = 1 << n
    occ = basis_occupations(n)
    idx = np.arange(dim, dtype=np.int64)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []

    diag = np.zeros(dim)
    if "coulomb" in terms:
        diag += coulomb_diagonal(lattice, occ)
    if "onsite" in terms:
        diag += onsite_diagonal(lattice, occ)
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)

    if "hopping" in terms:
        mps = lattice.modes_per_site
        for a, b in hopping_bonds(lattice):
            for spin in range(mps):
                p, q = a * mps + spin, b * mps + spin
                lo, hi = min(p, q), max(p, q)
                between = ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)
                for dst, src in ((p, q), (q, p)):
                    # c_dst^dagger c_src
                    ok = (((idx >> src) & 1) == 1) & (((idx >> dst) & 1) == 0)
                    start = idx[ok]
                    parity = np.array([bin(int(v) & between).count("1") & 1 for v in start], dtype=np.int64)
                    rows.append(start ^ (1 << src) ^ (1 << dst))
                    cols.append(start)
                    vals.append(-lattice.hopping_t * (1.0 - 2.0 * parity))

    h = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim))
    return h.tocsr()


def _sector_propagator(h: sparse.csr_matrix, tau: float, n_modes: int) -> np.ndarray:
    """exp(-i tau H) assembled from particle-number sectors (H conserves the number)."""
    dim = 1 << n_modes
    counts = np.array([bin(v).count("1") for v in range(dim)])
    u = np.zeros((dim, dim), dtype=complex)
    for k in range(n_modes + 1):
        sector = np.flatnonzero(counts == k)
        block = h[sector][:, sector].toarray()
        energies, vectors = linalg.eigh(block)
        u[np.ix_(sector, sector)] = (vectors * np.exp(-1j * tau * energies)) @ vectors.conj().T
    return u


def exact_evolution(lattice: LatticeSpec, t: float,
                    terms: Sequence[str] = ("hopping", "onsite", "coulomb")) -> np.ndarray:
    """Dense exp(-i t H)."""
    return _sector_propagator(hubbard_hamiltonian(lattice, terms), t, lattice.n_modes)


def coulomb_phases(lattice: LatticeSpec, opts: SynthesisOptions, model: str = "exact",
                   circuit: Optional[Circuit] = None) -> np.ndarray:
    """
    Diagonal phase of the interaction part (Coulomb plus on-site) of one step
    for every basis state:
        exact    -delta_t * (E_C + E_onsite)
        fmm      -delta_t * (order-p FMM energy + E_onsite)
        circuit  phases of the synthesized circuit (bit-exact quantized values)
    """
    _check_dense(lattice)
    occ = basis_occupations(lattice.n_modes)
    dt = opts.delta_t
    if model == "exact":
        return -dt * (coulomb_diagonal(lattice, occ) + onsite_diagonal(lattice, occ))
    if model == "fmm":
        h = build_hierarchy(lattice)
        fmm = np.array([fmm_total_energy(h, FockState(lattice, row), opts.order_p) for row in occ])
        return -dt * (fmm + onsite_diagonal(lattice, occ))
    if model == "circuit":
        if circuit is None:
            circuit = synthesize(build_hierarchy(lattice), opts)
        return system_phases(circuit, occ)
    raise SimulationModeError(f"unknown Coulomb model '{model}'")


def trotter_step(lattice: LatticeSpec, opts: SynthesisOptions, coulomb: str = "exact",
                 delta_t: Optional[float] = None, circuit: Optional[Circuit] = None) -> np.ndarray:
    """
    Dense unitary of one Trotter step: hopping kinetic exponential around the
    diagonal interaction phase (symmetric splitting for trotter_order=2).
    A delta_t of 0 gives the identity.
    """
    _check_dense(lattice)
    dt = opts.delta_t if delta_t is None else delta_t
    dim = 1 << lattice.n_modes
    if dt == 0.0:
        return np.eye(dim, dtype=complex)
    step_opts = opts if dt == opts.delta_t else opts.model_copy(update={"delta_t": dt})
    diagonal = np.exp(1j * coulomb_phases(lattice, step_opts, coulomb, circuit))
    hop = hubbard_hamiltonian(lattice, ("hopping",))
    if opts.trotter_order == 1:
        return _sector_propagator(hop, dt, lattice.n_modes) * diagonal[None, :]
    half = _sector_propagator(hop, dt / 2.0, lattice.n_modes)
    return (half * diagonal[None, :]) @ half


def haar_states(dim: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """(dim, n_samples) Haar-random state columns."""
    z = rng.standard_normal((dim, n_samples)) + 1j * rng.standard_normal((dim, n_samples))
    return z / np.linalg.norm(z, axis=0, keepdims=True)


def trotter_error_sweep(lattice: LatticeSpec, t_total: float, step_counts: Sequence[int],
                        opts: Optional[SynthesisOptions] = None, n_samples: int = 200,
                        seed: int = 0) -> List[Dict]:
    """
    Separates the Trotter splitting error from the FMM/quantization error.

    For every step count d (delta_t = t_total / d) it reports the worst 2-norm
    error over Haar-random states of:
        trotter_error   Trotter with exact Coulomb phases vs exact evolution
        fmm_error       Trotter with circuit phases vs Trotter with exact phases
    plus fmm_phase_error, the largest accumulated per-basis-state phase
    deviation d * |phase_circuit - phase_exact|. FMM columns are None when the
    lattice has no hierarchy (width not a power of two).
    """
    _check_dense(lattice)
    opts = opts or SynthesisOptions(spinful=lattice.spinful)
    rng = np.random.default_rng(seed)
    dim = 1 << lattice.n_modes
    psi = haar_states(dim, n_samples, rng)
    reference = exact_evolution(lattice, t_total) @ psi
    with_fmm = lattice.is_power_of_two and lattice.width >= 2

    rows = []
    for d in step_counts:
        dt = t_total / d
        step_opts = opts.model_copy(update={"delta_t": dt})
        exact_step = trotter_step(lattice, step_opts, "exact")
        exact_trotter = np.linalg.matrix_power(exact_step, d) @ psi
        row: Dict = {
            "steps": d,
            "delta_t": dt,
            "trotter_error": float(np.linalg.norm(exact_trotter - reference, axis=0).max()),
            "fmm_error": None,
            "fmm_phase_error": None,
        }
        if with_fmm:
            circuit = synthesize(build_hierarchy(lattice), step_opts)
            exact_phase = coulomb_phases(lattice, step_opts, "exact")
            circuit_phase = coulomb_phases(lattice, step_opts, "circuit", circuit)
            deviation = np.angle(np.exp(1j * (circuit_phase - exact_phase)))
            circuit_step = trotter_step(lattice, step_opts, "circuit", circuit=circuit)
            circuit_trotter = np.linalg.matrix_power(circuit_step, d) @ psi
            row["fmm_error"] = float(np.linalg.norm(circuit_trotter - exact_trotter, axis=0).max())
            row["fmm_phase_error"] = float(d * np.abs(deviation).max())
        logger.info(f"Trotter sweep d={d}: trotter={row['trotter_error']:.3e} fmm={row['fmm_error']}")
        rows.append(row)
    return rows
