# File: scripts/hardware_cost.py (Q2FMM)
"""
Depth, gate and ancilla estimates of a synthesized circuit on three hardware
models: a 2D nearest-neighbor grid (SWAP routing), a shuttling architecture
(constant-cost register moves) and shuttling with constant-depth fan-out.

Every block is scheduled as a rigid unit: it starts when all its qubits are
free, first routes its mover registers next to the anchor register, runs its
gate profile, and routes them back.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.models import HardwareModel, LatticeSpec, LevelCost, ResourceReport, SynthesisOptions
from q2fmm_workers import run_parallel
from scripts.circuit import Block, Circuit
from scripts.errors import InvariantViolation, LayoutCapacityError
from scripts.hierarchy import BoxHierarchy, BoxKey, build_hierarchy
from scripts.synthesizer import synthesize

logger = logging.getLogger(__name__)

MULTIPLIER_GATE_FACTOR = 8
MULTIPLIER_GATE_EXPONENT = 1.3
FANOUT_ADDER_DEPTH = 2
FANOUT_MULTIPLIER_DEPTH = 2


# === Layout ===
@dataclass(frozen=True, eq=False)
class Layout:
    """Qubit q sits at (xy[q, 0], xy[q, 1]) in slot slot[q] of that cell."""
    lattice: LatticeSpec
    xy: np.ndarray
    slot: np.ndarray
    cell_load: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def position(self, q: int) -> Tuple[int, int, int]:
        return int(self.xy[q, 0]), int(self.xy[q, 1]), int(self.slot[q])

    @property
    def max_cell_load(self) -> int:
        return max(self.cell_load.values()) if self.cell_load else 0


def anchor_cell(h: BoxHierarchy, key: BoxKey) -> Tuple[int, int]:
    """Cell holding a box's registers: the lower-left of the box's central 2x2 cells."""
    level, i, j = key
    side = h.side(level)
    x = i * side + (side - 1) // 2
    y = 0 if h.lattice.dimension == 1 else j * side + (side - 1) // 2
    return x, y


def layout(h: BoxHierarchy, c: Circuit, cell_capacity: Optional[int] = None) -> Layout:
    """
    Places system qubits at their sites and every box register at its box's
    anchor cell. Scratch qubits join the anchor of the first block using them.
    Positions are unique: each qubit takes the next free slot of its cell.
    """
    lattice = h.lattice
    n = c.n_qubits
    xy = np.full((n, 2), -1, dtype=np.int64)
    mps = lattice.modes_per_site

    for q_local, q in enumerate(c.system_qubits):
        xy[q] = lattice.site_xy(q_local // mps)
    for reg in c.registers:
        if reg.role != "system" and reg.box is not None:
            xy[list(reg.qubits)] = anchor_cell(h, reg.box)

    for block in c.blocks:
        qs = np.asarray(block.qubits, dtype=np.int64)
        if qs.size == 0:
            continue
        unplaced = xy[qs, 0] < 0
        if not unplaced.any():
            continue
        placed = qs[~unplaced]
        if block.anchor is not None and xy[block.qubits[block.anchor], 0] >= 0:
            target = xy[block.qubits[block.anchor]]
        elif placed.size:
            target = xy[placed[0]]
        else:
            target = np.zeros(2, dtype=np.int64)
        xy[qs[unplaced]] = target
    xy[xy[:, 0] < 0] = 0

    slot = np.zeros(n, dtype=np.int64)
    load: Dict[Tuple[int, int], int] = defaultdict(int)
    for q in range(n):
        cell = (int(xy[q, 0]), int(xy[q, 1]))
        slot[q] = load[cell]
        load[cell] += 1

    if cell_capacity is not None:
        over = {cell: k for cell, k in load.items() if k > cell_capacity}
        if over:
            worst = sorted(over.items(), key=lambda item: -item[1])[:5]
            raise LayoutCapacityError(
                f"{len(over)} cells exceed capacity {cell_capacity}; fullest cells: {worst}"
            )
    return Layout(lattice=lattice, xy=xy, slot=slot, cell_load=dict(load))


# === Routing ===
@dataclass(frozen=True)
class RouteCost:
    depth: int = 0
    swap_ops: int = 0
    shuttle_ops: int = 0


def route_cost(model: HardwareModel, src: Sequence[int], dst: Sequence[int]) -> RouteCost:
    """
    Round trip of one qubit from grid cell `src` to `dst` and back. The NN
    model walks a SWAP chain of Manhattan length each way; the shuttling
    models pay one shuttle each way whatever the distance.
    """
    if len(src) != 2 or len(dst) != 2 or min(*src, *dst) < 0:
        raise InvariantViolation(f"route endpoints must be grid cells, got {tuple(src)} -> {tuple(dst)}")
    distance = abs(int(dst[0]) - int(src[0])) + abs(int(dst[1]) - int(src[1]))
    if distance == 0:
        return RouteCost()
    if model.has_shuttling:
        return RouteCost(depth=2 * model.shuttle_depth_cost, shuttle_ops=2)
    return RouteCost(depth=2 * distance, swap_ops=2 * distance)


def block_routes(block: Block, model: HardwareModel, lay: Layout) -> List[RouteCost]:
    """One round trip per mover qubit, to the cell of the block's anchor."""
    if not block.movers or block.anchor is None:
        return []
    anchor = lay.xy[block.qubits[block.anchor]]
    return [route_cost(model, lay.xy[block.qubits[m]], anchor) for m in block.movers]


# === Arithmetic cost models ===
def literature_register_bits(c: Circuit, lattice: LatticeSpec) -> int:
    """n_Q = ceil(log2(Q + 1)) + fraction bits of the widest moment/box-sum format."""
    frac = 0
    for reg in c.registers:
        if reg.role in ("box_sum", "moment_real", "moment_imag"):
            frac = max(frac, reg.fmt.fraction_bits)
    return lattice.q.bit_length() + frac


def _spread(gates: int, depth: int) -> np.ndarray:
    depth = max(depth, 1)
    profile = np.full(depth, gates // depth, dtype=np.int64)
    profile[:gates % depth] += 1
    return profile


def _modeled_profile(block: Block, model: HardwareModel, n_q: int) -> Optional[np.ndarray]:
    if block.base_kind == "multiplier":
        depth = FANOUT_MULTIPLIER_DEPTH if model.has_fanout else 2 * n_q
        gates = MULTIPLIER_GATE_FACTOR * int(math.ceil(max(block.operand_bits, 1) ** MULTIPLIER_GATE_EXPONENT))
        return _spread(gates, depth)
    if block.base_kind == "adder":
        depth = FANOUT_ADDER_DEPTH if model.has_fanout else int(math.ceil(math.log2(max(n_q, 1)))) + 1
        return _spread(block.n_gates, depth)
    if block.base_kind == "copy" and model.has_fanout:
        return _spread(block.n_gates, model.fanout_depth_cost)
    return None


# === Scheduling ===
class _Histogram:
    def __init__(self):
        self.counts = np.zeros(1024, dtype=np.int64)

    def add(self, start: int, profile: np.ndarray):
        end = start + len(profile)
        if end > len(self.counts):
            grown = np.zeros(max(end, 2 * len(self.counts)), dtype=np.int64)
            grown[:len(self.counts)] = self.counts
            self.counts = grown
        self.counts[start:end] += profile

    def trimmed(self, depth: int) -> List[int]:
        return self.counts[:depth].tolist()


def schedule(c: Circuit, model: HardwareModel, lay: Layout) -> ResourceReport:
    """
    Greedy ASAP schedule of rigid blocks.

    Returns:
        ResourceReport: depth, gate counts, routing operations, per-level
        breakdown and per-layer operation counts (summing to gates + routing ops).
    """
    literature = model.arithmetic_cost_model == "literature"
    n_q = literature_register_bits(c, lay.lattice)
    fanout_depth = model.fanout_depth_cost if model.has_fanout else None
    ready = np.zeros(c.n_qubits, dtype=np.int64)
    hist = _Histogram()
    gate_counts: Dict[str, int] = defaultdict(int)
    per_level: Dict[Optional[int], LevelCost] = {}
    swaps = shuttles = 0
    modeled_any = False

    for block in c.blocks:
        qs = np.asarray(block.qubits, dtype=np.int64)
        start = int(ready[qs].max()) if qs.size else 0
        profile = _modeled_profile(block, model, n_q) if literature else None
        if profile is None:
            profile = block.template.profile(fanout_depth)
            for kind, k in block.template.counts.items():
                gate_counts[kind] += k
            body_gates = block.n_gates
        else:
            modeled_any = True
            body_gates = int(profile.sum())
            gate_counts[f"{block.base_kind.upper()}_MODELED"] += body_gates

        routes = block_routes(block, model, lay)
        route_depth = max((r.depth for r in routes), default=0)
        route_in = route_depth // 2
        route_out = route_depth - route_in
        block_swaps = sum(r.swap_ops for r in routes)
        block_shuttles = sum(r.shuttle_ops for r in routes)
        if route_in:
            # SWAP chains advance one cell per layer, shuttles land in the first layer
            routing = np.zeros(route_in, dtype=np.int64)
            for r in routes:
                if r.swap_ops:
                    routing[:r.swap_ops // 2] += 1
                elif r.shuttle_ops:
                    routing[0] += r.shuttle_ops // 2
            hist.add(start, routing)
            hist.add(start + route_in + len(profile), routing)
        hist.add(start + route_in, profile)
        end = start + route_in + len(profile) + route_out
        if qs.size:
            ready[qs] = end
        swaps += block_swaps
        shuttles += block_shuttles

        lc = per_level.get(block.level)
        if lc is None:
            lc = LevelCost(level=block.level, first_layer=start, last_layer=end)
            per_level[block.level] = lc
        lc.gates += body_gates
        lc.swap_ops += block_swaps
        lc.shuttle_ops += block_shuttles
        lc.max_route_depth = max(lc.max_route_depth, route_depth)
        lc.first_layer = min(lc.first_layer, start)
        lc.last_layer = max(lc.last_layer, end)

    depth = int(ready.max()) if ready.size else 0
    report = ResourceReport(
        model_kind=model.kind,
        arithmetic="modeled" if modeled_any else "as_built",
        depth=depth,
        gate_counts=dict(sorted(gate_counts.items())),
        total_gates=int(sum(gate_counts.values())),
        peak_ancillae=ancilla_peak(c),
        shuttle_ops=shuttles,
        swap_ops=swaps,
        per_level=sorted(per_level.values(), key=lambda lc: (lc.level is None, lc.level or 0)),
        layer_counts=hist.trimmed(depth),
    )
    logger.info(f"✅ {model.kind}: depth {report.depth}, {report.total_gates} gates, "
                f"{report.swap_ops} swaps, {report.shuttle_ops} shuttles")
    return report


# === Ancillae ===
def ancilla_peak(c: Circuit, recycle: bool = True, roles: Optional[Iterable[str]] = None) -> int:
    """
    Peak number of simultaneously live ancilla qubits in program order.

    A qubit is live from the first block touching it through the last. With
    recycle=False every ancilla ever touched counts. `roles` restricts the
    count to registers of those roles (scratch included only if named).
    """
    n = c.n_qubits
    role_of = np.full(n, "", dtype=object)
    for reg in c.registers:
        role_of[list(reg.qubits)] = reg.role
    if roles is None:
        wanted = role_of != "system"
    else:
        wanted = np.isin(role_of, list(roles))

    first = np.full(n, len(c.blocks), dtype=np.int64)
    last = np.full(n, -1, dtype=np.int64)
    for idx, block in enumerate(c.blocks):
        qs = np.asarray(block.qubits, dtype=np.int64)
        if qs.size:
            first[qs] = np.minimum(first[qs], idx)
            last[qs] = idx
    used = wanted & (last >= 0)
    if not recycle:
        return int(used.sum())
    delta = np.zeros(len(c.blocks) + 1, dtype=np.int64)
    np.add.at(delta, first[used], 1)
    np.add.at(delta, last[used] + 1, -1)
    live = np.cumsum(delta)
    return int(live.max()) if live.size else 0


# === Sweeps and bounds ===
def scaling_point(width: int, synthesis: SynthesisOptions, models: Sequence[HardwareModel],
                  q_fraction: float = 0.5) -> List[Dict]:
    """Synthesizes one lattice size and costs it on every hardware model."""
    n_sites = width * width
    lattice = LatticeSpec(width=width, spinful=synthesis.spinful,
                          electron_count_Q=max(1, int(round(q_fraction * n_sites * (2 if synthesis.spinful else 1)))))
    h = build_hierarchy(lattice)
    c = synthesize(h, synthesis)
    lay = layout(h, c)
    rows = []
    for model in models:
        report = schedule(c, model, lay)
        rows.append({
            "N": n_sites,
            "Q": lattice.q,
            "model": model.kind,
            "arithmetic": report.arithmetic,
            "depth": report.depth,
            "gates": report.total_gates,
            "peak_ancillae": report.peak_ancillae,
            "swap_ops": report.swap_ops,
            "shuttle_ops": report.shuttle_ops,
        })
    return rows


def scaling_sweep(widths: Sequence[int], synthesis: SynthesisOptions, models: Sequence[HardwareModel],
                  q_fraction: float = 0.5, jobs: int = 1) -> List[Dict]:
    """Rows sorted by (N, model) regardless of completion order."""
    chunks = run_parallel(scaling_point, [(w, synthesis, tuple(models), q_fraction) for w in widths], jobs)
    rows = [row for chunk in chunks for row in chunk]
    order = {m.kind: k for k, m in enumerate(models)}
    return sorted(rows, key=lambda r: (r["N"], order[r["model"]]))


def box_sizes(n_sites: int, dimension: int = 2) -> List[int]:
    """Sites per box on every level below the root: 4, 16, ... (2, 4, ... for chains)."""
    base = 4 if dimension == 2 else 2
    sizes = []
    beta = base
    while beta <= n_sites:
        sizes.append(beta)
        beta *= base
    return sizes


def literature_bounds(n_sites: int, q: int, eps_b: float, p: int, dimension: int = 2) -> List[Dict]:
    """
    Asymptotic reference values (leading terms, unit constants) for depth,
    gate count and ancilla count on each hardware model.
    """
    log_n = math.log2(n_sites)
    log_q = math.log2(max(q, 2))
    frac = max(0, int(math.ceil(math.log2(1.0 / eps_b) - 1e-12)))
    gates = 0.0
    ancillae = 0.0
    for beta in box_sizes(n_sites, dimension):
        n_beta = math.log2(min(beta, q) + 1) + frac
        gates += max(p, 1) ** 4 * (n_sites / beta) * n_beta ** MULTIPLIER_GATE_EXPONENT
        ancillae = max(ancillae, (n_sites / beta) * math.log2(beta + 1) ** 2)
    rows = [
        {"model": "NearestNeighbor2D", "quantity": "depth", "form": "sqrt(N)", "value": math.sqrt(n_sites)},
        {"model": "Shuttling", "quantity": "depth", "form": "log2(N) * log2(Q)", "value": log_n * log_q},
        {"model": "ShuttlingFanout", "quantity": "depth", "form": "log2(N)", "value": log_n},
    ]
    for kind in ("NearestNeighbor2D", "Shuttling", "ShuttlingFanout"):
        rows.append({"model": kind, "quantity": "gates", "form": "sum_beta p^4 (N/beta) n_beta^1.3", "value": gates})
        rows.append({"model": kind, "quantity": "ancillae", "form": "max_beta (N/beta) log2(beta+1)^2",
                     "value": ancillae})
    rows.append({"model": "fanout_only", "quantity": "ancillae", "form": "N^2", "value": float(n_sites ** 2)})
    return rows
