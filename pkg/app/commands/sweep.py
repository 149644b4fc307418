# File: app/commands/sweep.py (Q2FMM)

import argparse
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, List

from app.commands.energy import ENERGY_COLUMNS
from app.models import RunConfig
from q2fmm_utils import write_csv, write_json
from scripts.fits import GROWTH_FORMS, fit_scaling, geometric_rate, loglog_slope
from scripts.hardware_cost import scaling_sweep
from tasks.sweep_tasks import energy_sweep, trotter_sweep

logger = logging.getLogger(__name__)

STUDIES = ("energy", "scaling", "trotter")
ENERGY_SUMMARY_COLUMNS = ["N", "width", "p", "median_rel_error", "max_rel_error", "truncation_bound"]
SCALING_COLUMNS = ["N", "Q", "model", "arithmetic", "depth", "gates", "peak_ancillae", "swap_ops", "shuttle_ops"]
TROTTER_COLUMNS = ["steps", "delta_t", "trotter_error", "fmm_error", "fmm_phase_error"]


def register(subparsers: argparse._SubParsersAction):
    parser = subparsers.add_parser("sweep", help="Error-vs-p, resource-vs-N and Trotter-order sweeps with fits")
    parser.add_argument("--study", action="append", choices=STUDIES, default=None,
                        help="Study to run (repeatable); energy and scaling by default")
    parser.set_defaults(handler=cmd_sweep)


def _energy_fits(rows: List[Dict]) -> List[Dict]:
    by_size: Dict[int, List[Dict]] = defaultdict(list)
    for row in rows:
        by_size[row["N"]].append(row)
    return [
        {"N": n, "log_error_per_order": geometric_rate([r["p"] for r in rs], [r["median_rel_error"] for r in rs])}
        for n, rs in sorted(by_size.items())
    ]


def _scaling_fits(rows: List[Dict], models: List[str]) -> List[Dict]:
    reports = []
    for kind in models:
        mine = [r for r in rows if r["model"] == kind]
        if len(mine) < 3:
            logger.warning(f"⚠️ Skipping {kind} fits: need at least 3 sizes, have {len(mine)}")
            continue
        sizes = [r["N"] for r in mine]
        qs = [r["Q"] for r in mine]
        for quantity, forms in (("depth", list(GROWTH_FORMS)), ("gates", ["N"]), ("peak_ancillae", ["N"])):
            report = fit_scaling(sizes, [r[quantity] for r in mine], forms, qs, quantity, kind)
            reports.append(report.model_dump(mode="json"))
    return reports


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> List[Path]:
    """
    Runs the requested studies and writes one CSV per study plus fits.json;
    the energy study also writes its per-order medians to energy_summary.csv.
    Rows are sorted by their sweep key, so the files do not depend on --jobs.
    """
    studies = getattr(args, "study", None) or ["energy", "scaling"]
    out = Path(config.out_dir)
    files: List[Path] = []
    fits: Dict = {}

    if "energy" in studies:
        rows, summary = energy_sweep(config.sweep, config.seed, config.jobs, config.lattice.spinful)
        files.append(write_csv(out / "energy_sweep.csv", rows, ENERGY_COLUMNS))
        files.append(write_csv(out / "energy_summary.csv", summary, ENERGY_SUMMARY_COLUMNS))
        fits["energy"] = _energy_fits(summary)

    if "scaling" in studies:
        models = [config.hardware.model_copy(update={"kind": kind}) for kind in config.sweep.models]
        rows = scaling_sweep(config.sweep.sizes, config.synthesis, models, config.sweep.q_fraction, config.jobs)
        files.append(write_csv(out / "scaling_sweep.csv", rows, SCALING_COLUMNS))
        fits["scaling"] = _scaling_fits(rows, list(config.sweep.models))

    if "trotter" in studies:
        rows = trotter_sweep(config.lattice, config.sweep, config.synthesis, config.seed, config.jobs)
        files.append(write_csv(out / "trotter_sweep.csv", rows, TROTTER_COLUMNS))
        errors = [r["trotter_error"] for r in rows]
        slope = loglog_slope([r["steps"] for r in rows], errors) if len(rows) >= 2 and min(errors) > 0 else None
        fits["trotter"] = {"trotter_order": config.synthesis.trotter_order,
                           "error_vs_steps_slope": slope}

    files.append(write_json(out / "fits.json", fits))
    return files
