# File: scripts/circuit.py (Q2FMM)
"""
Gate-level circuit IR.

A Circuit is a register table plus an ordered list of Blocks. A Block applies a
Template (gates written on local indices 0..k-1) to a tuple of global qubit
ids, so the same adder or multiplier template is shared by every block of the
same shape. Qubit ids are never reused: every scratch register gets fresh ids.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from scripts.errors import ConfigError, SynthesisError
from scripts.fixed_point import FixedPointFormat

logger = logging.getLogger(__name__)

GATE_ARITY = {"NOT": 1, "CNOT": 2, "TOFFOLI": 3, "SWAP": 2, "PHASE": 1, "CPHASE": 2}
PHASE_KINDS = frozenset({"PHASE", "CPHASE"})
GATE_KINDS = frozenset(GATE_ARITY) | {"FANOUT"}

REGISTER_ROLES = ("system", "box_sum", "copy", "product", "moment_real", "moment_imag",
                  "energy", "constant", "scratch")
INVERSE_SUFFIX = "_inverse"


# --- Gates ---
@dataclass(frozen=True)
class Gate:
    """FANOUT stores its control first and every target after it."""
    kind: str
    qubits: Tuple[int, ...]
    angle: Optional[float] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise SynthesisError(f"unknown gate kind '{self.kind}'")
        arity = GATE_ARITY.get(self.kind)
        if arity is not None and len(self.qubits) != arity:
            raise SynthesisError(f"{self.kind} takes {arity} qubits, got {self.qubits}")
        if self.kind == "FANOUT" and len(self.qubits) < 2:
            raise SynthesisError("FANOUT needs a control and at least one target")
        if len(set(self.qubits)) != len(self.qubits):
            raise SynthesisError(f"{self.kind} acts on repeated qubits {self.qubits}")
        if self.kind in PHASE_KINDS:
            if self.angle is None or not math.isfinite(self.angle):
                raise SynthesisError(f"{self.kind} needs a finite angle, got {self.angle}")
        elif self.angle is not None:
            raise SynthesisError(f"{self.kind} takes no angle")

    def inverse(self) -> "Gate":
        if self.kind in PHASE_KINDS:
            return Gate(self.kind, self.qubits, -self.angle)
        return self

    def remap(self, mapping: Sequence[int]) -> "Gate":
        return Gate(self.kind, tuple(mapping[q] for q in self.qubits), self.angle)

    def cost(self, fanout_depth: Optional[int]) -> int:
        """Layers occupied; FANOUT is a CNOT chain unless the hardware provides fan-out."""
        if self.kind == "FANOUT":
            return fanout_depth if fanout_depth is not None else len(self.qubits) - 1
        return 1


# --- Templates ---
@dataclass(frozen=True, eq=False)
class Template:
    gates: Tuple[Gate, ...]
    n_local: int

    @cached_property
    def counts(self) -> Dict[str, int]:
        return dict(Counter(g.kind for g in self.gates))

    @cached_property
    def inverse(self) -> "Template":
        inv = Template(tuple(g.inverse() for g in reversed(self.gates)), self.n_local)
        inv.__dict__["inverse"] = self
        return inv

    @cached_property
    def _profiles(self) -> Dict[Optional[int], np.ndarray]:
        return {}

    def profile(self, fanout_depth: Optional[int] = None) -> np.ndarray:
        """
        Gates started per layer under greedy ASAP layering of the template alone.
        len(profile) is the template depth and profile.sum() its gate count.
        """
        cached = self._profiles.get(fanout_depth)
        if cached is not None:
            return cached
        ready = [0] * self.n_local
        starts: List[int] = []
        depth = 0
        for g in self.gates:
            start = max(ready[q] for q in g.qubits)
            end = start + g.cost(fanout_depth)
            for q in g.qubits:
                ready[q] = end
            starts.append(start)
            depth = max(depth, end)
        hist = np.zeros(depth, dtype=np.int64)
        if starts:
            np.add.at(hist, np.array(starts), 1)
        self._profiles[fanout_depth] = hist
        return hist

    def depth(self, fanout_depth: Optional[int] = None) -> int:
        return len(self.profile(fanout_depth))


def template_from_gates(gates: Sequence[Gate], qubits: Sequence[int]) -> Template:
    """Template for gates written on global ids; `qubits` fixes the local order."""
    local = {q: n for n, q in enumerate(qubits)}
    return Template(tuple(g.remap(local) for g in gates), len(qubits))


# --- Registers ---
@dataclass(frozen=True)
class Register:
    """Qubits are ordered least significant bit first."""
    name: str
    role: str
    qubits: Tuple[int, ...]
    fmt: FixedPointFormat
    level: Optional[int] = None
    box: Optional[Tuple[int, int, int]] = None

    def __post_init__(self):
        if self.role not in REGISTER_ROLES:
            raise SynthesisError(f"unknown register role '{self.role}'")
        if len(self.qubits) != self.fmt.width:
            raise SynthesisError(
                f"register '{self.name}' has {len(self.qubits)} qubits, format {self.fmt.describe()} "
                f"needs {self.fmt.width}"
            )

    @property
    def width(self) -> int:
        return len(self.qubits)

    def view(self, lo: int, fmt: FixedPointFormat, name: Optional[str] = None) -> "Register":
        """Alias of qubits[lo : lo + fmt.width] reinterpreted with `fmt`."""
        if lo < 0 or lo + fmt.width > self.width:
            raise SynthesisError(
                f"view [{lo}:{lo + fmt.width}] does not fit register '{self.name}' of width {self.width}"
            )
        return replace(self, name=name or f"{self.name}[{lo}:{lo + fmt.width}]",
                       qubits=self.qubits[lo:lo + fmt.width], fmt=fmt)


class QubitAllocator:
    """Hands out fresh qubit ids; ids are never returned to the pool."""

    def __init__(self, next_id: int = 0):
        self.next_id = next_id

    @classmethod
    def after(cls, registers: Iterable[Register]) -> "QubitAllocator":
        top = -1
        for reg in registers:
            if reg.qubits:
                top = max(top, max(reg.qubits))
        return cls(top + 1)

    def take(self, n: int) -> Tuple[int, ...]:
        ids = tuple(range(self.next_id, self.next_id + n))
        self.next_id += n
        return ids

    def register(self, name: str, role: str, fmt: FixedPointFormat,
                 level: Optional[int] = None, box: Optional[Tuple[int, int, int]] = None) -> Register:
        return Register(name=name, role=role, qubits=self.take(fmt.width), fmt=fmt, level=level, box=box)

    def scratch(self, width: int, label: str = "scratch") -> Register:
        ids = self.take(width)
        return Register(name=f"{label}@{ids[0]}" if ids else label, role="scratch", qubits=ids,
                        fmt=FixedPointFormat(width, 0, False))


# --- Blocks ---
@dataclass(frozen=True)
class Block:
    """
    One arithmetic or phase unit. `movers` lists local indices of qubits that
    travel to the position of local qubit `anchor` before the block runs.
    """
    kind: str
    qubits: Tuple[int, ...]
    template: Template
    label: str = ""
    level: Optional[int] = None
    movers: Tuple[int, ...] = ()
    anchor: Optional[int] = None
    operand_bits: int = 0

    def __post_init__(self):
        if len(self.qubits) != self.template.n_local:
            raise SynthesisError(
                f"block '{self.label}' maps {len(self.qubits)} qubits onto a template over {self.template.n_local}"
            )

    def gates(self) -> Iterator[Gate]:
        for g in self.template.gates:
            yield g.remap(self.qubits)

    @property
    def n_gates(self) -> int:
        return len(self.template.gates)

    @property
    def base_kind(self) -> str:
        """Kind with the inverse tag stripped: an uncomputing adder is still an adder."""
        return self.kind[:-len(INVERSE_SUFFIX)] if self.kind.endswith(INVERSE_SUFFIX) else self.kind

    @property
    def is_inverse(self) -> bool:
        return self.kind.endswith(INVERSE_SUFFIX)

    def inverted(self) -> "Block":
        kind = self.base_kind if self.is_inverse else self.kind + INVERSE_SUFFIX
        return replace(self, kind=kind, template=self.template.inverse)


@dataclass(frozen=True)
class Circuit:
    registers: Tuple[Register, ...] = ()
    blocks: Tuple[Block, ...] = ()

    @cached_property
    def n_qubits(self) -> int:
        top = -1
        for reg in self.registers:
            if reg.qubits:
                top = max(top, max(reg.qubits))
        for b in self.blocks:
            if b.qubits:
                top = max(top, max(b.qubits))
        return top + 1

    def register(self, name: str) -> Register:
        for reg in self.registers:
            if reg.name == name:
                return reg
        raise KeyError(name)

    def registers_with_role(self, role: str) -> List[Register]:
        return [r for r in self.registers if r.role == role]

    @property
    def system_qubits(self) -> Tuple[int, ...]:
        out: List[int] = []
        for reg in self.registers_with_role("system"):
            out.extend(reg.qubits)
        return tuple(out)

    def gates(self) -> Iterator[Gate]:
        for b in self.blocks:
            yield from b.gates()

    def gate_counts(self) -> Dict[str, int]:
        counts: Counter = Counter()
        for b in self.blocks:
            counts.update(b.template.counts)
        return dict(sorted(counts.items()))

    def gate_count(self) -> int:
        return sum(b.n_gates for b in self.blocks)

    def compose(self, *others: "Circuit") -> "Circuit":
        return compose(self, *others)

    def __add__(self, other: "Circuit") -> "Circuit":
        return compose(self, other)


def compose(*circuits: Circuit) -> Circuit:
    """Concatenates blocks; registers are merged by name."""
    regs: Dict[str, Register] = {}
    blocks: List[Block] = []
    for c in circuits:
        for reg in c.registers:
            existing = regs.get(reg.name)
            if existing is not None and existing.qubits != reg.qubits:
                raise SynthesisError(f"register name '{reg.name}' bound to two different qubit sets")
            regs[reg.name] = reg
        blocks.extend(c.blocks)
    return Circuit(registers=tuple(regs.values()), blocks=tuple(blocks))


def invert(c: Circuit) -> Circuit:
    """Blocks in reverse order, each replaced by its inverse (PHASE angles negated)."""
    return Circuit(registers=c.registers, blocks=tuple(b.inverted() for b in reversed(c.blocks)))


def single_block_circuit(kind: str, registers: Sequence[Register], gates: Sequence[Gate],
                         label: str = "", level: Optional[int] = None,
                         movers: Sequence[int] = (), anchor: Optional[int] = None) -> Circuit:
    """Wraps gates on global ids into a one-block circuit over the registers' qubits."""
    qubits: List[int] = []
    seen = set()
    for reg in registers:
        for q in reg.qubits:
            if q not in seen:
                seen.add(q)
                qubits.append(q)
    template = template_from_gates(gates, qubits)
    local = {q: n for n, q in enumerate(qubits)}
    block = Block(kind=kind, qubits=tuple(qubits), template=template, label=label, level=level,
                  movers=tuple(local[q] for q in movers),
                  anchor=local[anchor] if anchor is not None else None)
    unique = {r.name: r for r in registers}
    return Circuit(registers=tuple(unique.values()), blocks=(block,))


# --- Serialization ---
_HEADER = "Q2FMM-CIRCUIT 1"


def _token(text: str) -> str:
    return "-" if not text else "_".join(text.split())


def _fmt_token(fmt: FixedPointFormat) -> str:
    return fmt.describe()


def _parse_fmt(token: str) -> FixedPointFormat:
    sign, rest = token[0], token[1:]
    ib, fb = rest.split(".")
    return FixedPointFormat(int(ib), int(fb), sign == "s")


def serialize_circuit(c: Circuit) -> str:
    """
    Line-oriented text: a register table, then blocks with one gate per line
    written as `KIND q0 q1 ... [angle]` on global qubit ids.
    """
    lines = [_HEADER, f"REGISTERS {len(c.registers)}"]
    for reg in c.registers:
        level = "-" if reg.level is None else str(reg.level)
        box = "-" if reg.box is None else ",".join(str(v) for v in reg.box)
        qubits = ",".join(str(q) for q in reg.qubits) or "-"
        lines.append(f"REG {_token(reg.name)} {reg.role} {_fmt_token(reg.fmt)} {level} {box} {qubits}")
    lines.append(f"BLOCKS {len(c.blocks)}")
    for b in c.blocks:
        level = "-" if b.level is None else str(b.level)
        movers = ",".join(str(b.qubits[m]) for m in b.movers) or "-"
        anchor = "-" if b.anchor is None else str(b.qubits[b.anchor])
        lines.append(f"BLOCK {b.kind} {level} {_token(b.label)} {movers} {anchor} {b.operand_bits} {b.n_gates}")
        for g in b.gates():
            parts = [g.kind] + [str(q) for q in g.qubits]
            if g.angle is not None:
                parts.append(repr(float(g.angle)))
            lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> Circuit:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _HEADER:
        raise ConfigError("circuit file does not start with the Q2FMM-CIRCUIT header")
    pos = 1
    try:
        n_regs = int(lines[pos].split()[1])
        pos += 1
        registers = []
        for _ in range(n_regs):
            _, name, role, fmt, level, box, qubits = lines[pos].split()
            pos += 1
            registers.append(Register(
                name=name, role=role,
                qubits=tuple(int(q) for q in qubits.split(",")) if qubits != "-" else (),
                fmt=_parse_fmt(fmt),
                level=None if level == "-" else int(level),
                box=None if box == "-" else tuple(int(v) for v in box.split(",")),
            ))
        n_blocks = int(lines[pos].split()[1])
        pos += 1
        blocks = []
        for _ in range(n_blocks):
            _, kind, level, label, movers, anchor, operand_bits, n_gates = lines[pos].split()
            pos += 1
            gates = []
            for _ in range(int(n_gates)):
                parts = lines[pos].split()
                pos += 1
                gk = parts[0]
                if gk in PHASE_KINDS:
                    gates.append(Gate(gk, tuple(int(q) for q in parts[1:-1]), float(parts[-1])))
                else:
                    gates.append(Gate(gk, tuple(int(q) for q in parts[1:])))
            qubits: List[int] = []
            seen = set()
            for g in gates:
                for q in g.qubits:
                    if q not in seen:
                        seen.add(q)
                        qubits.append(q)
            mover_ids = [] if movers == "-" else [int(q) for q in movers.split(",")]
            anchor_id = None if anchor == "-" else int(anchor)
            for q in mover_ids + ([anchor_id] if anchor_id is not None else []):
                if q not in seen:
                    seen.add(q)
                    qubits.append(q)
            local = {q: n for n, q in enumerate(qubits)}
            blocks.append(Block(
                kind=kind, qubits=tuple(qubits), template=template_from_gates(gates, qubits),
                label="" if label == "-" else label, level=None if level == "-" else int(level),
                movers=tuple(local[q] for q in mover_ids),
                anchor=None if anchor_id is None else local[anchor_id],
                operand_bits=int(operand_bits),
            ))
    except (IndexError, ValueError) as e:
        raise ConfigError(f"malformed circuit text near line {pos + 1}: {e}") from e
    return Circuit(registers=tuple(registers), blocks=tuple(blocks))


def circuit_manifest(c: Circuit) -> Dict:
    """Register roles and widths plus per-level and per-kind gate counts."""
    per_level: Dict[str, Counter] = {}
    per_block_kind: Counter = Counter()
    for b in c.blocks:
        key = "-" if b.level is None else str(b.level)
        per_level.setdefault(key, Counter()).update(b.template.counts)
        per_block_kind[b.kind] += 1
    roles: Counter = Counter()
    for reg in c.registers:
        roles[reg.role] += reg.width
    return {
        "n_qubits": c.n_qubits,
        "n_blocks": len(c.blocks),
        "total_gates": c.gate_count(),
        "gate_counts": c.gate_counts(),
        "block_kinds": dict(sorted(per_block_kind.items())),
        "qubits_by_role": dict(sorted(roles.items())),
        "per_level_gate_counts": {k: dict(sorted(v.items())) for k, v in sorted(per_level.items())},
        "registers": [
            {"name": r.name, "role": r.role, "width": r.width, "format": r.fmt.describe(),
             "level": r.level, "box": list(r.box) if r.box is not None else None}
            for r in c.registers
        ],
    }
