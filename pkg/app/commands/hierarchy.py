# File: app/commands/hierarchy.py (Q2FMM)

import argparse
import logging
from pathlib import Path
from typing import List

from app.models import RunConfig
from q2fmm_utils import write_json, write_text
from scripts.hierarchy import (build_hierarchy, dump_hierarchy, finest_near_pairs, level_cutoff,
                               surviving_levels, well_separated_pairs)

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction):
    parser = subparsers.add_parser("hierarchy", help="Dump boxes, near fields and interaction lists")
    parser.set_defaults(handler=cmd_hierarchy)


def cmd_hierarchy(config: RunConfig, args: argparse.Namespace) -> List[Path]:
    """Writes hierarchy.jsonl (one record per box) and hierarchy_summary.json."""
    h = build_hierarchy(config.lattice)
    if config.synthesis.xi is not None:
        h = level_cutoff(h, config.synthesis.xi)
    out = Path(config.out_dir)

    levels = []
    for level, row in enumerate(h.levels):
        levels.append({
            "level": level,
            "boxes": len(row),
            "interaction_pairs": len(well_separated_pairs(h, level)),
            "max_interaction_list": max(len(h.interactions[b.key]) for b in row),
            "max_near_field": max(len(h.near[b.key]) for b in row),
        })
    summary = {
        "n_sites": config.lattice.n_sites,
        "max_level": h.max_level,
        "levels": levels,
        "surviving_levels": surviving_levels(h),
        "finest_near_pairs": len(finest_near_pairs(h)),
        "xi": h.xi,
    }
    logger.info(f"Hierarchy: {' + '.join(str(lv['boxes']) for lv in levels)} boxes")
    return [
        write_text(out / "hierarchy.jsonl", dump_hierarchy(h)),
        write_json(out / "hierarchy_summary.json", summary),
    ]
