# File: app/commands/estimate.py (Q2FMM)

import argparse
import logging
from pathlib import Path
from typing import List

from app.models import RunConfig
from q2fmm_utils import write_csv, write_json
from scripts.hardware_cost import ancilla_peak, layout, literature_bounds, schedule
from scripts.hierarchy import build_hierarchy
from scripts.synthesizer import synthesize

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["model", "arithmetic", "depth", "total_gates", "peak_ancillae", "swap_ops", "shuttle_ops"]


def register(subparsers: argparse._SubParsersAction):
    parser = subparsers.add_parser("estimate", help="Schedule one circuit on each hardware model")
    parser.set_defaults(handler=cmd_estimate)


def cmd_estimate(config: RunConfig, args: argparse.Namespace) -> List[Path]:
    """
    Costs the same synthesized circuit on every model in sweep.models, using
    the remaining hardware settings from the config.
    """
    lattice = config.lattice
    h = build_hierarchy(lattice)
    c = synthesize(h, config.synthesis)
    lay = layout(h, c, config.hardware.cell_capacity)

    reports = {}
    rows = []
    for kind in config.sweep.models:
        model = config.hardware.model_copy(update={"kind": kind})
        report = schedule(c, model, lay)
        reports[kind] = report.model_dump(mode="json")
        rows.append({"model": kind, **{k: getattr(report, k) for k in SUMMARY_COLUMNS[1:]}})

    payload = {
        "n_sites": lattice.n_sites,
        "Q": lattice.q,
        "order_p": config.synthesis.order_p,
        "max_cell_load": lay.max_cell_load,
        "peak_ancillae_no_recycling": ancilla_peak(c, recycle=False),
        "reports": reports,
    }
    bounds = literature_bounds(lattice.n_sites, lattice.q, config.synthesis.eps_b, config.synthesis.order_p,
                               lattice.dimension)
    out = Path(config.out_dir)
    return [
        write_json(out / "estimate.json", payload),
        write_csv(out / "estimate.csv", rows, SUMMARY_COLUMNS),
        write_csv(out / "literature_bounds.csv", bounds, ["model", "quantity", "form", "value"]),
    ]
