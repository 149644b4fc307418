# File: app/commands/synth.py (Q2FMM)

import argparse
import logging
from pathlib import Path
from typing import List

from app.models import RunConfig
from q2fmm_utils import write_json, write_text
from scripts.circuit import circuit_manifest, serialize_circuit
from scripts.hierarchy import build_hierarchy
from scripts.quantized import quantization_allowance
from scripts.synthesizer import build_plan, synthesize

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction):
    parser = subparsers.add_parser("synth", help="Synthesize one Coulomb Trotter step as a circuit")
    parser.set_defaults(handler=cmd_synth)


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> List[Path]:
    """Writes circuit.txt (gate IR text) and circuit_manifest.json."""
    h = build_hierarchy(config.lattice)
    c = synthesize(h, config.synthesis)
    manifest = circuit_manifest(c)
    manifest["order_p"] = config.synthesis.order_p
    manifest["quantization_allowance"] = quantization_allowance(build_plan(h, config.synthesis))
    out = Path(config.out_dir)
    logger.info(f"✅ Synthesized {manifest['total_gates']} gates on {manifest['n_qubits']} qubits")
    return [
        write_text(out / "circuit.txt", serialize_circuit(c)),
        write_json(out / "circuit_manifest.json", manifest),
    ]
