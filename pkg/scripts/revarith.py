# File: scripts/revarith.py (Q2FMM)
"""
Reversible arithmetic blocks over the circuit IR.

Adders are Cuccaro ripple-carry circuits (MAJ/UMA chains with one carry
ancilla); box sums chain one in-place adder per term into a shared
output; multipliers are shift-and-add over controlled in-place adders. Every
builder writes its gates on a local layout so identical shapes share one cached
Template. Scratch qubits come from a QubitAllocator; when none is passed the
builder allocates above the highest qubit id it was given.
"""

import logging
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

from scripts.circuit import (Block, Circuit, Gate, QubitAllocator, Register, Template)
from scripts.errors import ArithmeticWidthError, RepresentationError
from scripts.fixed_point import FixedPointFormat, Rounding, fraction_bits_for, integer_bits_for

logger = logging.getLogger(__name__)


# --- Gate helpers on local indices ---
def _maj(c: int, b: int, a: int) -> List[Gate]:
    return [Gate("CNOT", (a, b)), Gate("CNOT", (a, c)), Gate("TOFFOLI", (c, b, a))]


def _uma(c: int, b: int, a: int) -> List[Gate]:
    return [Gate("TOFFOLI", (c, b, a)), Gate("CNOT", (a, c)), Gate("CNOT", (c, b))]


def inplace_add_gates(target: Sequence[int], addend: Sequence[int], carry: int,
                      carry_out: Optional[int] = None) -> List[Gate]:
    """
    target += addend (mod 2^n) with `carry` a zeroed ancilla that is restored.
    With `carry_out`, the carry of the top bit is XORed into that qubit.
    """
    n = len(target)
    if n != len(addend):
        raise ArithmeticWidthError(f"in-place adder needs equal widths, got {n} and {len(addend)}")
    if n == 0:
        return []
    gates = _maj(carry, target[0], addend[0])
    for i in range(1, n):
        gates += _maj(addend[i - 1], target[i], addend[i])
    if carry_out is not None:
        gates.append(Gate("CNOT", (addend[n - 1], carry_out)))
    for i in range(n - 1, 0, -1):
        gates += _uma(addend[i - 1], target[i], addend[i])
    gates += _uma(carry, target[0], addend[0])
    return gates


def _extend_gates(src: Sequence[int], signed: bool, dest: Sequence[int], offset: int) -> List[Gate]:
    """CNOT-copy src into dest[offset:], sign-extending into the remaining top bits."""
    gates = [Gate("CNOT", (q, dest[offset + i])) for i, q in enumerate(src)]
    if signed:
        for j in range(offset + len(src), len(dest)):
            gates.append(Gate("CNOT", (src[-1], dest[j])))
    return gates


# --- Adder ---
def _aligned_width(fmt: FixedPointFormat, frac: int, signed_common: bool) -> int:
    w = fmt.width + (frac - fmt.fraction_bits)
    if signed_common and not fmt.signed:
        w += 1
    return w


@lru_cache(maxsize=None)
def _adder_template(fa: FixedPointFormat, fb: FixedPointFormat, wo: int) -> Tuple[Template, int]:
    frac = max(fa.fraction_bits, fb.fraction_bits)
    signed = fa.signed or fb.signed
    w = max(_aligned_width(fa, frac, signed), _aligned_width(fb, frac, signed))
    wa, wb = fa.width, fb.width
    A = list(range(0, wa))
    B = list(range(wa, wa + wb))
    O = list(range(wa + wb, wa + wb + wo))
    nxt = wa + wb + wo

    gates: List[Gate] = []
    prep: List[Gate] = []

    def operand(bits: List[int], fmt: FixedPointFormat) -> List[int]:
        nonlocal nxt
        offset = frac - fmt.fraction_bits
        if offset == 0 and len(bits) == w and fmt.signed == signed:
            return bits
        scratch = list(range(nxt, nxt + w))
        nxt += w
        prep.extend(_extend_gates(bits, fmt.signed, scratch, offset))
        return scratch

    a_ext = operand(A, fa)
    b_ext = operand(B, fb)
    carry = nxt
    nxt += 1

    gates += prep
    gates += [Gate("CNOT", (a_ext[i], O[i])) for i in range(w)]
    gates += inplace_add_gates(O[:w], b_ext, carry, carry_out=O[w])
    if signed:
        gates.append(Gate("CNOT", (a_ext[-1], O[w])))
        gates.append(Gate("CNOT", (b_ext[-1], O[w])))
        for j in range(w + 1, wo):
            gates.append(Gate("CNOT", (O[w], O[j])))
    gates += list(reversed(prep))
    return Template(tuple(gates), nxt), nxt - (wa + wb + wo)


def _alloc(alloc: Optional[QubitAllocator], registers: Sequence[Register]) -> QubitAllocator:
    return alloc if alloc is not None else QubitAllocator.after(registers)


def _block_circuit(kind: str, registers: Sequence[Register], template: Template, n_scratch: int,
                   alloc: QubitAllocator, label: str, level: Optional[int],
                   movers: Sequence[Register] = (), anchor: Optional[Register] = None,
                   operand_bits: int = 0, extra_qubits: Sequence[int] = ()) -> Circuit:
    scratch_regs: Tuple[Register, ...] = ()
    qubits: List[int] = list(extra_qubits)
    for reg in registers:
        qubits.extend(reg.qubits)
    if n_scratch:
        s = alloc.scratch(n_scratch, label=f"{kind}_scratch")
        scratch_regs = (s,)
        qubits.extend(s.qubits)
    local = {q: n for n, q in enumerate(qubits)}
    mover_ids = tuple(local[q] for reg in movers for q in reg.qubits)
    anchor_id = local[anchor.qubits[0]] if anchor is not None else None
    block = Block(kind=kind, qubits=tuple(qubits), template=template, label=label, level=level,
                  movers=mover_ids, anchor=anchor_id, operand_bits=operand_bits)
    regs = {r.name: r for r in registers}
    for s in scratch_regs:
        regs[s.name] = s
    return Circuit(registers=tuple(regs.values()), blocks=(block,))


def build_adder(a: Register, b: Register, out: Register, alloc: Optional[QubitAllocator] = None,
                label: str = "", level: Optional[int] = None,
                movers: Sequence[Register] = (), anchor: Optional[Register] = None) -> Circuit:
    """
    Out-of-place adder |a, b, 0> -> |a, b, a + b>.

    Operands with different fraction bits are aligned to the larger one; a
    signed operand makes the sum signed. `out` needs at least one bit more than
    the widest aligned operand.
    """
    if set(a.qubits) & set(b.qubits) or (set(a.qubits) | set(b.qubits)) & set(out.qubits):
        raise ArithmeticWidthError("adder operands and output must use disjoint qubits")
    frac = max(a.fmt.fraction_bits, b.fmt.fraction_bits)
    signed = a.fmt.signed or b.fmt.signed
    if out.fmt.fraction_bits != frac:
        raise ArithmeticWidthError(
            f"adder output '{out.name}' has {out.fmt.fraction_bits} fraction bits, operands need {frac}"
        )
    if out.fmt.signed != signed:
        raise ArithmeticWidthError(f"adder output '{out.name}' signedness does not match its operands")
    w = max(_aligned_width(a.fmt, frac, signed), _aligned_width(b.fmt, frac, signed))
    if out.width < w + 1:
        raise ArithmeticWidthError(
            f"adder output '{out.name}' has width {out.width}, needs at least {w + 1} "
            f"for operands '{a.name}' ({a.width}) and '{b.name}' ({b.width})"
        )
    template, n_scratch = _adder_template(a.fmt, b.fmt, out.width)
    return _block_circuit("adder", (a, b, out), template, n_scratch, _alloc(alloc, (a, b, out)),
                          label or f"add:{out.name}", level, movers, anchor, operand_bits=w)


# --- Multi-operand box sum ---
@lru_cache(maxsize=None)
def _box_sum_template(widths: Tuple[int, ...], wo: int) -> Tuple[Template, int]:
    O = list(range(sum(widths), sum(widths) + wo))
    nxt = sum(widths) + wo
    narrow = any(w < wo for w in widths)
    E = list(range(nxt, nxt + wo)) if narrow else []
    carry = nxt + len(E)

    gates: List[Gate] = []
    start = 0
    for w in widths:
        T = list(range(start, start + w))
        start += w
        if w == wo:
            gates += inplace_add_gates(O, T, carry)
            continue
        pad = _extend_gates(T, False, E, 0)
        gates += pad + inplace_add_gates(O, E, carry) + pad
    return Template(tuple(gates), carry + 1), len(E) + 1


def build_box_sum(terms: Sequence[Register], out: Register, alloc: Optional[QubitAllocator] = None,
                  label: str = "", level: Optional[int] = None,
                  movers: Sequence[Register] = (), anchor: Optional[Register] = None) -> Circuit:
    """
    Multi-operand adder |t_1 .. t_k, 0> -> |t_1 .. t_k, t_1 + .. + t_k> for
    unsigned integer terms, accumulated in place into `out`. `out` must hold
    the largest reachable total; the sum is taken mod 2^width otherwise.
    """
    if len(terms) < 2:
        raise ArithmeticWidthError(f"box sum needs at least two terms, got {len(terms)}")
    seen = set(out.qubits)
    for t in terms:
        if t.fmt.signed or t.fmt.fraction_bits or out.fmt.signed or out.fmt.fraction_bits:
            raise ArithmeticWidthError(f"box sum '{out.name}' takes unsigned integer registers only")
        if t.width > out.width:
            raise ArithmeticWidthError(
                f"box sum output '{out.name}' has width {out.width}, term '{t.name}' has {t.width}"
            )
        if seen & set(t.qubits):
            raise ArithmeticWidthError("box sum terms and output must use disjoint qubits")
        seen |= set(t.qubits)
    template, n_scratch = _box_sum_template(tuple(t.width for t in terms), out.width)
    return _block_circuit("adder", (*terms, out), template, n_scratch, _alloc(alloc, (*terms, out)),
                          label or f"sum:{out.name}", level, movers, anchor, operand_bits=out.width)


# --- Multiplier ---
@lru_cache(maxsize=None)
def _multiplier_template(fa: FixedPointFormat, fb: FixedPointFormat, wo: int) -> Tuple[Template, int]:
    wa, wb = fa.width, fb.width
    A = list(range(0, wa))
    B = list(range(wa, wa + wb))
    O = list(range(wa + wb, wa + wb + wo))
    T = list(range(wa + wb + wo, wa + wb + 2 * wo))
    carry = wa + wb + 2 * wo

    gates: List[Gate] = []
    for i in range(wa):
        n = wo - i
        load = []
        for j in range(n):
            if j < wb:
                load.append(Gate("TOFFOLI", (A[i], B[j], T[j])))
            elif fb.signed:
                load.append(Gate("TOFFOLI", (A[i], B[-1], T[j])))
        add = inplace_add_gates(O[i:i + n], T[:n], carry)
        if fa.signed and i == wa - 1:
            add = [g.inverse() for g in reversed(add)]
        gates += load + add + list(reversed(load))
    return Template(tuple(gates), carry + 1), wo + 1


def build_multiplier(a: Register, b: Register, out: Register, alloc: Optional[QubitAllocator] = None,
                     label: str = "", level: Optional[int] = None,
                     movers: Sequence[Register] = (), anchor: Optional[Register] = None) -> Circuit:
    """
    Shift-and-add multiplier |a, b, 0> -> |a, b, a * b>.

    Row i adds (a_i AND b) << i into `out`; for a signed `a` the top row
    subtracts instead. The product carries fa + fb fraction bits.
    """
    if set(a.qubits) & set(b.qubits) or (set(a.qubits) | set(b.qubits)) & set(out.qubits):
        raise ArithmeticWidthError("multiplier operands and output must use disjoint qubits")
    if out.width < a.width + b.width:
        raise ArithmeticWidthError(
            f"multiplier output '{out.name}' has width {out.width}, needs {a.width + b.width}"
        )
    if out.fmt.fraction_bits != a.fmt.fraction_bits + b.fmt.fraction_bits:
        raise ArithmeticWidthError(
            f"multiplier output '{out.name}' must carry {a.fmt.fraction_bits + b.fmt.fraction_bits} fraction bits"
        )
    if out.fmt.signed != (a.fmt.signed or b.fmt.signed):
        raise ArithmeticWidthError(f"multiplier output '{out.name}' signedness does not match its operands")
    template, n_scratch = _multiplier_template(a.fmt, b.fmt, out.width)
    return _block_circuit("multiplier", (a, b, out), template, n_scratch, _alloc(alloc, (a, b, out)),
                          label or f"mul:{out.name}", level, movers, anchor,
                          operand_bits=max(a.width, b.width))


# --- Constant loads ---
def const_load_pattern(control: Optional[int], pattern: int, target: Register,
                       label: str = "", level: Optional[int] = None) -> Circuit:
    """CNOT (or NOT without control) onto every target bit set in `pattern`."""
    if control is not None and control in target.qubits:
        raise ArithmeticWidthError("constant-load control overlaps its target register")
    n = target.width
    offset = 0 if control is None else 1
    gates = []
    for bit in range(n):
        if (pattern >> bit) & 1:
            if control is None:
                gates.append(Gate("NOT", (offset + bit,)))
            else:
                gates.append(Gate("CNOT", (0, offset + bit)))
    template = Template(tuple(gates), n + offset)
    extra = () if control is None else (control,)
    return _block_circuit("const_load", (target,), template, 0, QubitAllocator(0), label or f"load:{target.name}",
                          level, extra_qubits=extra)


def build_const_load(control: Optional[int], constant: float, target: Register,
                     rounding: Rounding = "nearest_even", label: str = "",
                     level: Optional[int] = None) -> Circuit:
    """
    |q, 0> -> |q, q * constant>, the constant rounded into target's format.
    With control=None the constant is loaded unconditionally.
    """
    try:
        pattern = target.fmt.encode(constant, rounding)
    except RepresentationError as e:
        raise RepresentationError(f"constant for register '{target.name}': {e}") from e
    return const_load_pattern(control, pattern, target, label, level)


# --- Phase ladder ---
def ladder_angles(fmt: FixedPointFormat, t_eff: float) -> List[float]:
    """
    Angle per bit so that the ladder imprints exp(-i * t_eff * value).
    The sign bit of a signed format carries the negative weight.
    """
    angles = []
    for bit in range(fmt.width):
        weight = 2.0 ** (bit - fmt.fraction_bits)
        if fmt.signed and bit == fmt.width - 1:
            weight = -weight
        angles.append(-t_eff * weight)
    return angles


def build_phase_ladder(reg: Register, t_eff: float, label: str = "", level: Optional[int] = None) -> Circuit:
    gates = tuple(Gate("PHASE", (bit,), angle) for bit, angle in enumerate(ladder_angles(reg.fmt, t_eff)))
    template = Template(gates, reg.width)
    return _block_circuit("ladder", (reg,), template, 0, QubitAllocator(0), label or f"ladder:{reg.name}", level)


# --- COPY ---
@lru_cache(maxsize=None)
def _copy_template(width: int, n_dests: int, use_fanout: bool) -> Template:
    src = list(range(width))
    dests = [list(range(width * (k + 1), width * (k + 2))) for k in range(n_dests)]
    gates: List[Gate] = []
    if use_fanout:
        for bit in range(width):
            if n_dests:
                gates.append(Gate("FANOUT", (src[bit],) + tuple(d[bit] for d in dests)))
    else:
        holders = [src]
        pending = list(dests)
        while pending:
            filled = []
            for h in holders:
                if not pending:
                    break
                d = pending.pop(0)
                gates += [Gate("CNOT", (h[bit], d[bit])) for bit in range(width)]
                filled.append(d)
            holders += filled
    return Template(tuple(gates), width * (n_dests + 1))


def build_copy(src: Register, dests: Sequence[Register], use_fanout: bool = False,
               label: str = "", level: Optional[int] = None) -> Circuit:
    """
    Duplicates src onto zeroed dests. Without fan-out the CNOTs form a doubling
    tree of depth ceil(log2(k + 1)); with fan-out each bit is one FANOUT gate.
    """
    for d in dests:
        if d.width != src.width:
            raise ArithmeticWidthError(
                f"copy destination '{d.name}' has width {d.width}, source '{src.name}' has {src.width}"
            )
    template = _copy_template(src.width, len(dests), use_fanout)
    return _block_circuit("copy", (src, *dests), template, 0, QubitAllocator(0),
                          label or f"copy:{src.name}", level, operand_bits=src.width)


# --- Register sizing ---
def register_width_for(Q: int, eps_b: float, signed: bool = False) -> int:
    """ceil(log2(Q+1)) integer bits + ceil(log2(1/eps_b)) fraction bits (+1 sign)."""
    if Q < 1:
        raise RepresentationError(f"Q must be >= 1, got {Q}")
    return integer_bits_for(Q) + fraction_bits_for(eps_b) + (1 if signed else 0)
