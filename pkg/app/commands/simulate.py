# File: app/commands/simulate.py (Q2FMM)

import argparse
import logging
import sys
from pathlib import Path
from typing import List

import numpy as np

from app.models import RunConfig
from q2fmm_utils import write_json, write_text
from scripts.errors import InvariantViolation
from scripts.hierarchy import build_hierarchy
from scripts.multipole import FockState, fmm_total_energy, random_fock_state
from scripts.quantized import all_basis_occupations, evaluate_plan, quantization_allowance
from scripts.simulator import onsite_diagonal, run_basis_batch
from scripts.synthesizer import build_plan, emit_circuit, synth_spinful_adapter

logger = logging.getLogger(__name__)

EXHAUSTIVE_MODES = 16
CHUNK = 4096


def register(subparsers: argparse._SubParsersAction):
    parser = subparsers.add_parser(
        "simulate", help="Run the synthesized circuit on basis states and compare with the quantized oracle"
    )
    parser.add_argument("--exhaustive", action="store_true",
                        help=f"Enumerate every basis state (default when the lattice has <= {EXHAUSTIVE_MODES} modes)")
    parser.set_defaults(handler=cmd_simulate)


def _input_states(config: RunConfig, exhaustive: bool) -> np.ndarray:
    lattice = config.lattice
    if exhaustive or lattice.n_modes <= EXHAUSTIVE_MODES:
        occ = all_basis_occupations(lattice.n_modes)
        return occ[occ.sum(axis=1) <= lattice.q]
    rng = np.random.default_rng(config.seed)
    return np.stack([random_fock_state(lattice, rng, config.sweep.filling).occupations
                     for _ in range(config.sweep.n_samples)])


def cmd_simulate(config: RunConfig, args: argparse.Namespace) -> List[Path]:
    """
    Pushes basis states through the circuit, checks that every ancilla returns
    to zero and the system register is unchanged, and compares each phase with
    the quantized classical evaluation of the same plan. Also reports the gap
    between the quantized and the analytic FMM energy on a sample.

    Raises:
        InvariantViolation: ancillae not restored or phase mismatch (after the report is written).
    """
    lattice = config.lattice
    h = build_hierarchy(lattice)
    plan = build_plan(h, config.synthesis)
    c = emit_circuit(plan)
    if lattice.spinful:
        c = synth_spinful_adapter(c, lattice, config.synthesis.delta_t)

    occ = _input_states(config, getattr(args, "exhaustive", False))
    system = list(c.system_qubits)
    ancillae = [q for q in range(c.n_qubits) if q not in set(system)]
    restored = True
    max_phase_error = 0.0
    for start in range(0, occ.shape[0], CHUNK):
        batch = occ[start:start + CHUNK]
        bits, phases = run_basis_batch(c, batch)
        restored = restored and bool(np.all(bits[:, system] == batch)) and not bits[:, ancillae].any()
        expected, _ = evaluate_plan(plan, batch)
        deviation = np.abs(np.angle(np.exp(1j * (phases - expected))))
        max_phase_error = max(max_phase_error, float(deviation.max()))

    rng = np.random.default_rng(config.seed)
    sample = occ[rng.choice(occ.shape[0], size=min(config.sweep.n_samples, occ.shape[0]), replace=False)]
    _, quantized = evaluate_plan(plan, sample)
    analytic = np.array([fmm_total_energy(h, FockState(lattice, row), config.synthesis.order_p) for row in sample])
    analytic = analytic + onsite_diagonal(lattice, sample)
    energy_gap = float(np.abs(quantized - analytic).max())
    allowance = quantization_allowance(plan)

    summary = {
        "n_states": int(occ.shape[0]),
        "n_qubits": c.n_qubits,
        "ancillae_restored": restored,
        "max_phase_error": max_phase_error,
        "energy_sample": int(sample.shape[0]),
        "max_energy_gap": energy_gap,
        "quantization_allowance": allowance,
    }
    report = (f"ancillae restored: {'true' if restored else 'false'}; "
              f"max |phase error|: {max_phase_error:g}\n"
              f"max |quantized - analytic energy|: {energy_gap:.6g} (allowance {allowance:.6g})\n")
    sys.stdout.write(report)
    out = Path(config.out_dir)
    files = [write_json(out / "simulate_report.json", summary), write_text(out / "simulate_report.txt", report)]
    if not restored or max_phase_error > 0.0:
        raise InvariantViolation(
            f"circuit disagrees with the quantized oracle (ancillae restored: {restored}, "
            f"max phase error {max_phase_error:g}); see {out / 'simulate_report.json'}"
        )
    return files
