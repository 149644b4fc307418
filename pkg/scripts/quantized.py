# File: scripts/quantized.py (Q2FMM)
"""
Classical evaluation of a synthesis plan on batches of basis states.

Registers are tracked as int64 arrays of scaled integers with the same
two's-complement wrap and floor shifts the circuit performs, and phases are
accumulated gate by gate in emission order. For every computational basis
state the result equals the phase of scripts.simulator.run_basis on the
emitted circuit exactly, not just within a tolerance.
"""

import logging
import math
from typing import Dict, Tuple

import numpy as np

from scripts.errors import SimulationCapError, SynthesisError
from scripts.multipole import FockState
from scripts.revarith import ladder_angles
from scripts.synthesizer import Op, SynthesisPlan

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def _as_occupations(plan: SynthesisPlan, occupations) -> np.ndarray:
    if isinstance(occupations, FockState):
        occupations = occupations.occupations[None, :]
    occ = np.atleast_2d(np.asarray(occupations, dtype=np.int64))
    if occ.shape[1] != plan.lattice.n_modes:
        raise SimulationCapError(
            f"occupations have {occ.shape[1]} modes, lattice has {plan.lattice.n_modes}"
        )
    if np.any((occ != 0) & (occ != 1)):
        raise SynthesisError("occupations must be 0 or 1")
    return occ


def _apply(plan: SynthesisPlan, op: Op, values: Dict[str, np.ndarray]):
    fmt = plan.registers[op.out].fmt
    if op.kind == "load":
        k = np.int64(op.scaled)
        if op.control is None:
            values[op.out] = fmt.wrap_array(np.full_like(values["n0"], k))
        else:
            values[op.out] = fmt.wrap_array(values[f"n{op.control}"] * k)
    elif op.kind == "view":
        values[op.out] = fmt.wrap_array(values[op.args[0]] >> np.int64(op.lo))
    elif op.kind in ("add", "sum"):
        total = np.zeros_like(values["n0"])
        for name in op.args:
            shift = fmt.fraction_bits - plan.registers[name].fmt.fraction_bits
            total = total + (values[name] << np.int64(shift))
        values[op.out] = fmt.wrap_array(total)
    elif op.kind == "mul":
        a, b = op.args
        values[op.out] = fmt.wrap_array(values[a] * values[b])
    else:
        raise SynthesisError(f"unknown plan op '{op.kind}'")


def evaluate_plan(plan: SynthesisPlan, occupations) -> Tuple[np.ndarray, np.ndarray]:
    """
    Runs the plan on a (n_states, n_modes) occupation batch.

    Returns:
        (phases, energies): phases reduced mod 2 pi, and the quantized Coulomb
        (plus on-site) energies without any wrap.
    """
    occ = _as_occupations(plan, occupations)
    n = occ.shape[0]
    delta_t = plan.opts.delta_t
    values: Dict[str, np.ndarray] = {f"n{mode}": occ[:, mode].copy() for mode in range(occ.shape[1])}
    phase = np.zeros(n)
    energy = np.zeros(n)

    for op in plan.onsite + plan.direct:
        both = values[f"n{op.mode_a}"] & values[f"n{op.mode_b}"]
        phase = phase + op.angle * both
        energy = energy - (op.angle / delta_t) * both

    for lp in plan.levels:
        for op in lp.ops:
            _apply(plan, op, values)
        for pair in lp.pairs:
            for op in pair.ops:
                _apply(plan, op, values)
            fmt = plan.registers[pair.ladder_src].fmt
            scaled = values[pair.ladder_src]
            pattern = scaled & np.int64((1 << fmt.width) - 1)
            for bit, angle in enumerate(ladder_angles(fmt, pair.t_eff)):
                phase = phase + angle * ((pattern >> np.int64(bit)) & 1)
            energy = energy + (pair.t_eff / delta_t) * (scaled * fmt.ulp)

    return np.mod(phase, TWO_PI), energy


def quantized_phases(plan: SynthesisPlan, occupations) -> np.ndarray:
    """Circuit phase of every basis state in the batch, in [0, 2 pi)."""
    return evaluate_plan(plan, occupations)[0]


def quantized_energy(plan: SynthesisPlan, occupations) -> np.ndarray:
    """Energy the circuit encodes, sum of direct, on-site and far-field register values."""
    return evaluate_plan(plan, occupations)[1]


def quantization_allowance(plan: SynthesisPlan) -> float:
    """Worst-case |quantized_energy - fmm_total_energy| at the plan's order, from rounding and flooring."""
    return plan.allowance


def all_basis_occupations(n_modes: int) -> np.ndarray:
    """Every basis state as rows of little-endian mode occupations."""
    if n_modes > 20:
        raise SimulationCapError(f"refusing to enumerate 2^{n_modes} basis states")
    idx = np.arange(1 << n_modes, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n_modes, dtype=np.int64)[None, :]) & 1).astype(np.int64)
