# File: tasks/sweep_tasks.py (Q2FMM)

import logging
from operator import itemgetter
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.models import LatticeSpec, SweepOptions, SynthesisOptions
from q2fmm_workers import run_parallel
from scripts.hierarchy import build_hierarchy
from scripts.multipole import (brute_force_energy, fmm_total_energy, random_fock_state, relative_error,
                               truncation_error_bound)
from scripts.simulator import trotter_error_sweep

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)


# === Energy sweep points ===
def state_seed(seed: int, width: int, k: int) -> int:
    """Seed of the k-th random state drawn for one lattice width."""
    return int(np.random.SeedSequence([seed, width, k]).generate_state(1)[0])


def energy_point(width: int, p_values: Sequence[int], n_states: int, filling: float,
                 seed: int, spinful: bool = False) -> Dict[str, List[Dict]]:
    """
    Relative FMM energy error of every (state, p) on one lattice width, plus the
    median/max per order. Each state is drawn from its own generator seeded by
    state_seed(seed, width, k), so a single row can be reproduced from its seed.
    """
    lattice = LatticeSpec(width=width, spinful=spinful)
    h = build_hierarchy(lattice)
    states: List[Dict] = []
    for k in range(n_states):
        s = state_seed(seed, width, k)
        state = random_fock_state(lattice, np.random.default_rng(s), filling)
        exact = brute_force_energy(state)
        for p in p_values:
            approx = fmm_total_energy(h, state, p)
            states.append({"N": lattice.n_sites, "p": p, "state_seed": s, "E_fmm": approx, "E_exact": exact,
                           "rel_error": relative_error(approx, exact)})
    summary = []
    for p in p_values:
        errors = [r["rel_error"] for r in states if r["p"] == p]
        summary.append({"N": lattice.n_sites, "width": width, "p": p,
                        "median_rel_error": float(np.median(errors)), "max_rel_error": float(np.max(errors)),
                        "truncation_bound": sum(truncation_error_bound(h, p).values())})
    logger.info(f"✅ Energy sweep point width={width}: {n_states} states x {len(p_values)} orders")
    return {"states": states, "summary": summary}


def energy_sweep(sweep: SweepOptions, seed: int, jobs: int = 1,
                 spinful: bool = False) -> Tuple[List[Dict], List[Dict]]:
    """(per-state rows, per-order summary rows), both sorted by (N, p)."""
    chunks = run_parallel(
        energy_point,
        [(w, tuple(sweep.p_values), sweep.n_states, sweep.filling, seed, spinful) for w in sweep.sizes],
        jobs,
    )
    rows = [row for chunk in chunks for row in chunk["states"]]
    summary = [row for chunk in chunks for row in chunk["summary"]]
    by_key = itemgetter("N", "p")
    return sorted(rows, key=by_key), sorted(summary, key=by_key)


# === Trotter sweep points ===
def trotter_point(lattice: LatticeSpec, t_total: float, steps: int, opts: Optional[SynthesisOptions],
                  n_samples: int, seed: int) -> Dict:
    """
    One step count of the Trotter study. The Haar-random states depend only
    on `seed`, so every point measures errors on the same sample.
    """
    return trotter_error_sweep(lattice, t_total, [steps], opts, n_samples, seed)[0]


def trotter_sweep(lattice: LatticeSpec, sweep: SweepOptions, opts: Optional[SynthesisOptions],
                  seed: int, jobs: int = 1) -> List[Dict]:
    rows = run_parallel(
        trotter_point,
        [(lattice, sweep.t_total, d, opts, sweep.n_samples, seed) for d in sweep.step_counts],
        jobs,
    )
    return sorted(rows, key=lambda r: r["steps"])
