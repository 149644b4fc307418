# File: app/commands/energy.py (Q2FMM)

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from app.models import RunConfig
from q2fmm_utils import format_value, write_csv, write_text
from scripts.hierarchy import build_hierarchy
from scripts.multipole import (FockState, brute_force_energy, fmm_total_energy, random_fock_state,
                               relative_error)

logger = logging.getLogger(__name__)

ENERGY_COLUMNS = ["N", "p", "state_seed", "E_fmm", "E_exact", "rel_error"]


def parse_state(text: str) -> List[int]:
    """'0,1,1,0' -> [0, 1, 1, 0] (one entry per mode)."""
    try:
        return [int(tok) for tok in text.replace(" ", "").split(",") if tok != ""]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"state must be comma-separated 0/1 values: {e}") from e


def register(subparsers: argparse._SubParsersAction):
    parser = subparsers.add_parser("energy", help="Compare FMM and exact Coulomb energies of one Fock state")
    parser.add_argument("--state", type=parse_state, default=None,
                        help="Comma-separated mode occupations; a seeded random state when omitted")
    parser.set_defaults(handler=cmd_energy)


def cmd_energy(config: RunConfig, args: argparse.Namespace) -> List[Path]:
    """
    Prints E_exact and E_fmm for every order in sweep.p_values and writes the
    same numbers to energy.csv and energy_report.txt. state_seed is the run
    seed for a random state and empty when --state is given.
    """
    lattice = config.lattice
    seed: Optional[int] = None
    if config.state is not None:
        state = FockState(lattice, np.asarray(config.state))
    else:
        seed = config.seed
        state = random_fock_state(lattice, np.random.default_rng(seed), config.sweep.filling)
    h = build_hierarchy(lattice)
    exact = brute_force_energy(state)

    rows = []
    lines = [f"state = {''.join(str(int(b)) for b in state.occupations)}", f"E_exact = {format_value(exact)}"]
    for p in config.sweep.p_values:
        approx = fmm_total_energy(h, state, p)
        err = relative_error(approx, exact)
        rows.append({"N": lattice.n_sites, "p": p, "state_seed": seed, "E_fmm": approx, "E_exact": exact,
                     "rel_error": err})
        lines.append(f"E_fmm[p={p}] = {format_value(approx)}  rel_error = {format_value(err)}")
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)

    out = Path(config.out_dir)
    return [
        write_csv(out / "energy.csv", rows, ENERGY_COLUMNS),
        write_text(out / "energy_report.txt", report),
    ]
