# File: scripts/synthesizer.py (Q2FMM)
"""
Builds the Coulomb-phase circuit of one Trotter step.

Synthesis runs in two passes. `build_plan` works purely classically: it walks
the hierarchy, fixes every register format, rounds every geometric constant
and checks worst-case register magnitudes. `emit_circuit` turns the plan into
reversible blocks. The quantized oracle (scripts/quantized.py) evaluates the
same plan with integer arithmetic, so circuit and oracle agree bit for bit.

Circuit layout of a step:
    [on-site CPHASEs, added by synth_spinful_adapter] -> [finest-level direct CPHASEs]
    -> per level, finest first: [box sums / moments] -> [COPY] -> [Evo gates] -> [uncopy]
    -> [inverse box sums / moments, last in first out]
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.models import LatticeSpec, SynthesisOptions
from scripts.circuit import (Block, Circuit, Gate, QubitAllocator, Register, Template, compose,
                             invert)
from scripts.errors import RegisterOverflowError, SynthesisError
from scripts.fixed_point import FixedPointFormat, format_for, integer_bits_for
from scripts.hierarchy import (Box, BoxHierarchy, BoxKey, box_sites, finest_near_pairs,
                               lattice_positions, level_cutoff, well_separated_pairs)
from scripts.multipole import (expand_negative_m, full_index, iter_lm, lm_index, n_packed,
                               normalization_factors, pair_energies, regular_table)
from scripts.revarith import (build_adder, build_box_sum, build_copy, build_multiplier,
                              build_phase_ladder, const_load_pattern)

logger = logging.getLogger(__name__)

PartKey = Tuple[int, int, str]


# === Plan ===
@dataclass(frozen=True)
class EffectiveTime:
    """Radians per unit of the product register: K_C(center_A, center_B) * delta_t."""
    value: float

    def __post_init__(self):
        if not self.value > 0.0:
            raise SynthesisError(f"effective time must be positive, got {self.value}")


@dataclass(frozen=True)
class PlanRegister:
    name: str
    role: str
    fmt: FixedPointFormat
    box: BoxKey


@dataclass(frozen=True)
class Op:
    """
    kind is one of:
        add   out = args[0] + args[1]
        load  out = n_control * scaled  (unconditional when control is None)
        mul   out = args[0] * args[1]
        sum   out = args[0] + ... + args[-1], unsigned, accumulated in place
        view  out = bits [lo, lo + width) of args[0]
    """
    kind: str
    out: str
    args: Tuple[str, ...] = ()
    control: Optional[int] = None
    scaled: int = 0
    lo: int = 0


@dataclass(frozen=True)
class PhaseOp:
    """CPHASE on two modes (direct pair or on-site term)."""
    mode_a: int
    mode_b: int
    angle: float


@dataclass(frozen=True)
class MomentInfo:
    """Moment part of one box: register (None when every constant rounds to zero),
    bound on both the analytic and the quantized value, and quantization error."""
    name: Optional[str]
    bound: float
    error: float


@dataclass
class PairPlan:
    level: int
    a: BoxKey
    b: BoxKey
    ops: List[Op]
    ladder_src: str
    t_eff: float


@dataclass
class LevelPlan:
    level: int
    ops: List[Op] = field(default_factory=list)
    parts: Dict[BoxKey, List[str]] = field(default_factory=dict)
    pairs: List[PairPlan] = field(default_factory=list)


@dataclass
class SynthesisPlan:
    hierarchy: BoxHierarchy
    opts: SynthesisOptions
    registers: Dict[str, PlanRegister]
    onsite: List[PhaseOp]
    direct: List[PhaseOp]
    levels: List[LevelPlan]
    allowance: float = 0.0

    @property
    def lattice(self) -> LatticeSpec:
        return self.hierarchy.lattice

    def mode_register(self, mode: int) -> str:
        return f"n{mode}"


# --- Geometry helpers ---
def _site_box(h: BoxHierarchy, site: int) -> BoxKey:
    x, y = h.lattice.site_xy(site)
    return (h.max_level, x, y)


def _modes_of_site(lattice: LatticeSpec, site: int) -> List[int]:
    mps = lattice.modes_per_site
    return [site * mps + s for s in range(mps)]


def _box_modes(h: BoxHierarchy, box: Box) -> List[int]:
    modes: List[int] = []
    for site in box_sites(h, box):
        modes.extend(_modes_of_site(h.lattice, int(site)))
    return modes


def _occupancy(h: BoxHierarchy, box: Box) -> int:
    return min(len(_box_modes(h, box)), h.lattice.q)


def effective_times(h: BoxHierarchy, delta_t: float) -> Dict[Tuple[BoxKey, BoxKey], EffectiveTime]:
    """
    t'_AB = delta_t / |center_A - center_B| for every unordered interaction pair
    (the 1/2 of the double sum is absorbed by enumerating each pair once);
    finest-level pairs, near field included, use exact site distances.
    """
    if delta_t <= 0.0:
        raise SynthesisError(f"delta_t must be positive, got {delta_t}")
    times: Dict[Tuple[BoxKey, BoxKey], EffectiveTime] = {}
    for level in range(2, h.max_level + 1):
        for a, b in well_separated_pairs(h, level):
            times[(a.key, b.key)] = EffectiveTime(delta_t / math.dist(a.center, b.center))
    for a, b in finest_near_pairs(h):
        times[(a.key, b.key)] = EffectiveTime(delta_t / math.dist(a.center, b.center))
    return times


def direct_pair_order(h: BoxHierarchy) -> List[Tuple[Box, Box]]:
    """
    Finest-level pairs (near field plus interaction list) grouped by displacement
    and then by a two-coloring along the displacement, so that every group
    touches each site at most once and runs as one parallel round.
    """
    pairs = finest_near_pairs(h) + well_separated_pairs(h, h.max_level)
    groups: Dict[Tuple[int, int, int], List[Tuple[Box, Box]]] = defaultdict(list)
    for a, b in pairs:
        (xa, ya), (xb, yb) = a.index, b.index
        dx, dy = xb - xa, yb - ya
        if dx:
            color = (xa // abs(dx)) % 2
        else:
            color = (ya // abs(dy)) % 2
        groups[(dx, dy, color)].append((a, b))
    ordered: List[Tuple[Box, Box]] = []
    for key in sorted(groups):
        ordered.extend(sorted(groups[key], key=lambda ab: (ab[0].key, ab[1].key)))
    return ordered


# --- Plan builder ---
class _PlanBuilder:
    def __init__(self, h: BoxHierarchy, opts: SynthesisOptions):
        self.h = h
        self.opts = opts
        self.lattice = h.lattice
        self.f = opts.fraction_bits
        self.u = 2.0 ** -self.f
        self.registers: Dict[str, PlanRegister] = {}
        for mode in range(self.lattice.n_modes):
            site = mode // self.lattice.modes_per_site
            self.registers[f"n{mode}"] = PlanRegister(f"n{mode}", "system", FixedPointFormat(1, 0, False),
                                                      _site_box(h, site))
        self.moments: Dict[BoxKey, Dict[PartKey, MomentInfo]] = {}
        # worst-case |quantized - analytic| energy summed over far-field pairs
        self.allowance = 0.0

    def declare(self, name: str, role: str, fmt: FixedPointFormat, box: BoxKey) -> str:
        if name in self.registers:
            raise SynthesisError(f"plan register '{name}' declared twice")
        self.registers[name] = PlanRegister(name, role, fmt, box)
        return name

    def fmt(self, name: str) -> FixedPointFormat:
        return self.registers[name].fmt

    def add(self, ops: List[Op], out: str, a: str, b: str, role: str, box: BoxKey,
            target: Optional[FixedPointFormat] = None) -> str:
        """Emit a + b into a register one bit wider, then narrow it to `target` when given."""
        fa, fb = self.fmt(a), self.fmt(b)
        signed = fa.signed or fb.signed
        frac = max(fa.fraction_bits, fb.fraction_bits)
        w = max(fa.width + frac - fa.fraction_bits + (1 if signed and not fa.signed else 0),
                fb.width + frac - fb.fraction_bits + (1 if signed and not fb.signed else 0))
        raw_fmt = FixedPointFormat(w + 1 - frac - (1 if signed else 0), frac, signed)
        if target is None or target.width >= raw_fmt.width:
            self.declare(out, role, raw_fmt, box)
            ops.append(Op("add", out, (a, b)))
            return out
        raw = self.declare(f"{out}~", role, raw_fmt, box)
        ops.append(Op("add", raw, (a, b)))
        self.declare(out, role, target, box)
        ops.append(Op("view", out, (raw,), lo=0))
        return out

    def sum_tree(self, ops: List[Op], out: str, terms: Sequence[str], role: str, box: BoxKey,
                 target: FixedPointFormat) -> str:
        """Left-to-right chain of two-operand adders, each narrowed to `target`."""
        if len(terms) == 1:
            return terms[0]
        acc = terms[0]
        for k, term in enumerate(terms[1:], start=1):
            name = out if k == len(terms) - 1 else f"{out}.a{k}"
            acc = self.add(ops, name, acc, term, role, box, target)
        return acc

    # --- 0th order ---
    def zeroth_level(self, level: int, lower: Optional[LevelPlan]) -> LevelPlan:
        """One multi-operand sum per box: over its mode registers at the finest merged
        level, over its children's sums above that. A single term is aliased."""
        h = self.h
        plan = LevelPlan(level)
        for box in h.boxes(level):
            if level == h.max_level - 1:
                terms = [f"n{mode}" for mode in _box_modes(h, box)]
            else:
                terms = [lower.parts[c.key][0] for c in h.children(box)]
            if len(terms) == 1:
                plan.parts[box.key] = [terms[0]]
                continue
            target = FixedPointFormat(integer_bits_for(_occupancy(h, box)), 0, False)
            name = self.declare(f"S{level}.{box.index[0]}.{box.index[1]}", "box_sum", target, box.key)
            plan.ops.append(Op("sum", name, tuple(terms)))
            plan.parts[box.key] = [name]
        return plan

    def zeroth_pairs(self, plan: LevelPlan):
        h = self.h
        for a, b in well_separated_pairs(h, plan.level):
            ra, rb = plan.parts[a.key][0], plan.parts[b.key][0]
            fa, fb = self.fmt(ra), self.fmt(rb)
            prod = self.declare(f"P{plan.level}.{a.index[0]}.{a.index[1]}-{b.index[0]}.{b.index[1]}", "product",
                                FixedPointFormat(fa.width + fb.width, 0, False), a.key)
            t_eff = EffectiveTime(self.opts.delta_t / math.dist(a.center, b.center)).value
            plan.pairs.append(PairPlan(plan.level, a.key, b.key, [Op("mul", prod, (ra, rb))], prod, t_eff))

    # --- higher order ---
    def part_keys(self) -> List[PartKey]:
        keys: List[PartKey] = []
        for ell, m in iter_lm(self.opts.order_p):
            keys.append((ell, m, "re"))
            if m > 0:
                keys.append((ell, m, "im"))
        return keys

    def moment_format(self, box: Box) -> FixedPointFormat:
        return FixedPointFormat(integer_bits_for(_occupancy(self.h, box)), self.f, True)

    def quantize(self, value: float) -> int:
        scaled = math.ldexp(value, self.f)
        return int(math.floor(scaled)) if self.opts.rounding == "floor" else int(round(scaled))

    def _check(self, name: str, bound: float):
        fmt = self.fmt(name)
        if bound > fmt.max_value + 1e-12:
            raise RegisterOverflowError(name, bound, fmt.max_value)

    def moments_from_sites(self, level: int) -> LevelPlan:
        """Controlled constant loads c_a = R_lm(r_a - center) / s_lm per mode, summed per part."""
        h, p = self.h, self.opts.order_p
        plan = LevelPlan(level)
        positions = lattice_positions(self.lattice)
        q = self.lattice.q
        for box in h.boxes(level):
            sites = box_sites(h, box)
            table = regular_table(p, positions[sites] - np.asarray(box.center)) / normalization_factors(p, box.radius)
            fmt = self.moment_format(box)
            occ = float(_occupancy(h, box))
            info: Dict[PartKey, MomentInfo] = {}
            parts = []
            for key in self.part_keys():
                ell, m, comp = key
                values = table[:, lm_index(ell, m)]
                values = values.real if comp == "re" else values.imag
                consts = []
                for site, c in zip(sites, values):
                    k = self.quantize(float(c))
                    for mode in _modes_of_site(self.lattice, int(site)):
                        consts.append((mode, k, float(c)))
                err = float(sum(sorted((abs(k * self.u - c) for _, k, c in consts), reverse=True)[:q]))
                nonzero = [(mode, k) for mode, k, _ in consts if k != 0]
                if not nonzero:
                    info[key] = MomentInfo(None, err, err)
                    continue
                name = f"M{level}.{box.index[0]}.{box.index[1]}.{ell}{m}{comp[0]}"
                role = "moment_real" if comp == "re" else "moment_imag"
                temps = []
                for n, (mode, k) in enumerate(nonzero):
                    t = self.declare(name if len(nonzero) == 1 else f"{name}.c{n}", role, fmt, box.key)
                    plan.ops.append(Op("load", t, (), control=mode, scaled=k))
                    temps.append(t)
                final = self.sum_tree(plan.ops, name, temps, role, box.key, fmt)
                pos = sorted((k for _, k in nonzero if k > 0), reverse=True)[:q]
                neg = sorted((-k for _, k in nonzero if k < 0), reverse=True)[:q]
                self._check(final, max(sum(pos), sum(neg)) * self.u)
                info[key] = MomentInfo(final, occ + err, err)
                parts.append(final)
            self.moments[box.key] = info
            plan.parts[box.key] = parts
        return plan

    def m2m_coefficients(self, child: Box, parent: Box) -> Dict[Tuple[PartKey, PartKey], float]:
        """Real coefficients of every (parent part, child part) pair in the normalized M2M map."""
        p = self.opts.order_p
        d = np.asarray(parent.center) - np.asarray(child.center)
        shift = expand_negative_m(regular_table(p, -d)[0], p)
        s_child = normalization_factors(p, child.radius)
        s_parent = normalization_factors(p, parent.radius)
        coeffs: Dict[Tuple[PartKey, PartKey], float] = {}
        for ell, m in iter_lm(p):
            for j in range(ell + 1):
                for kappa in range(j + 1):
                    # M_{j,-kappa} = (-1)^kappa conj(M_{j,kappa}) folds the negative orders in
                    c_re = 0j
                    c_im = 0j
                    for k in ((kappa,) if kappa == 0 else (kappa, -kappa)):
                        if abs(m - k) > ell - j:
                            continue
                        t = (shift[full_index(ell - j, m - k)] * s_child[lm_index(j, kappa)]
                             / s_parent[lm_index(ell, m)])
                        if k >= 0:
                            c_re += t
                            c_im += 1j * t
                        else:
                            sign = (-1.0) ** kappa
                            c_re += sign * t
                            c_im -= 1j * sign * t
                    for comp, value in (("re", c_re), ("im", c_im)):
                        if comp == "im" and kappa == 0:
                            continue
                        child_key = (j, kappa, comp)
                        coeffs[((ell, m, "re"), child_key)] = value.real
                        if m > 0:
                            coeffs[((ell, m, "im"), child_key)] = value.imag
        return coeffs

    def product_format(self, a: FixedPointFormat, b: FixedPointFormat) -> FixedPointFormat:
        return FixedPointFormat(a.width + b.width - 1 - 2 * self.f, 2 * self.f, True)

    def floor_view(self, ops: List[Op], name: str, prod: str, bound: float, role: str, box: BoxKey) -> str:
        """Drops the f low bits of a 2f-fraction product (floor), sized to `bound`."""
        fmt = format_for(bound, self.f, True)
        fmt = FixedPointFormat(min(fmt.integer_bits, self.fmt(prod).width - 1 - 2 * self.f), self.f, True)
        self.declare(name, role, fmt, box)
        ops.append(Op("view", name, (prod,), lo=self.f))
        return name

    def moments_from_children(self, level: int) -> LevelPlan:
        """M2M: parent part = sum over child parts of floor(coefficient * child part)."""
        h = self.h
        plan = LevelPlan(level)
        u_floor = self.u if self.f > 0 else 0.0
        for box in h.boxes(level):
            fmt = self.moment_format(box)
            occ = float(_occupancy(h, box))
            children = [(self.moments[c.key], self.m2m_coefficients(c, box)) for c in h.children(box)]
            info: Dict[PartKey, MomentInfo] = {}
            parts = []
            for key in self.part_keys():
                ell, m, comp = key
                name = f"M{level}.{box.index[0]}.{box.index[1]}.{ell}{m}{comp[0]}"
                role = "moment_real" if comp == "re" else "moment_imag"
                terms = []
                err = 0.0
                for child_info, coeffs in children:
                    for child_key, child in child_info.items():
                        coef = coeffs.get((key, child_key), 0.0)
                        k = self.quantize(coef) if child.name is not None else 0
                        if k == 0:
                            err += abs(coef) * child.bound
                            continue
                        n = len(terms)
                        const = self.declare(f"{name}.k{n}", "constant", format_for(abs(k) * self.u, self.f, True),
                                             box.key)
                        plan.ops.append(Op("load", const, (), control=None, scaled=k))
                        prod = self.declare(f"{name}.p{n}", role, self.product_format(self.fmt(child.name),
                                                                                      self.fmt(const)), box.key)
                        plan.ops.append(Op("mul", prod, (child.name, const)))
                        term_bound = abs(k) * self.u * child.bound + u_floor
                        terms.append(self.floor_view(plan.ops, f"{name}.q{n}", prod, term_bound, role, box.key))
                        err += abs(coef) * child.error + abs(k * self.u - coef) * child.bound + u_floor
                if not terms:
                    info[key] = MomentInfo(None, err, err)
                    continue
                final = self.sum_tree(plan.ops, name, terms, role, box.key, fmt)
                if len(terms) > 1:
                    self._check(final, occ + err)
                info[key] = MomentInfo(final, occ + err, err)
                parts.append(final)
            self.moments[box.key] = info
            plan.parts[box.key] = parts
        return plan

    def pair_matrix(self, a: Box, b: Box, keys_a: List[PartKey], keys_b: List[PartKey]) -> np.ndarray:
        """Real bilinear form G with E_AB = sum G[i, j] xA_i xB_j over normalized moment parts."""
        p = self.opts.order_p

        def units(keys: List[PartKey], scale: np.ndarray) -> np.ndarray:
            out = np.zeros((len(keys), n_packed(p)), dtype=complex)
            for row, (ell, m, comp) in enumerate(keys):
                out[row, lm_index(ell, m)] = scale[lm_index(ell, m)] * (1.0 if comp == "re" else 1j)
            return out

        ua = units(keys_a, normalization_factors(p, a.radius))
        ub = units(keys_b, normalization_factors(p, b.radius))
        na, nb = len(keys_a), len(keys_b)
        r_ab = np.asarray(b.center) - np.asarray(a.center)
        g = pair_energies(np.repeat(ua, nb, axis=0), np.tile(ub, (na, 1)), np.tile(r_ab, (na * nb, 1)), p)
        return g.reshape(na, nb)

    def higher_pairs(self, plan: LevelPlan):
        """E_AB = sum G~[i, j] floor(xA_i xB_j) into an energy register, then a ladder with delta_t."""
        h = self.h
        u_floor = self.u if self.f > 0 else 0.0
        for a, b in well_separated_pairs(h, plan.level):
            info_a, info_b = self.moments[a.key], self.moments[b.key]
            keys_a, keys_b = list(info_a), list(info_b)
            g = self.pair_matrix(a, b, keys_a, keys_b)
            tag = f"{plan.level}.{a.index[0]}.{a.index[1]}-{b.index[0]}.{b.index[1]}"
            ops: List[Op] = []
            terms = []
            for i, ka in enumerate(keys_a):
                xa = info_a[ka]
                for j, kb in enumerate(keys_b):
                    xb = info_b[kb]
                    coef = float(g[i, j])
                    k = self.quantize(coef) if xa.name is not None and xb.name is not None else 0
                    if k == 0:
                        self.allowance += abs(coef) * xa.bound * xb.bound
                        continue
                    n = len(terms)
                    prod = self.declare(f"E{tag}.x{n}", "product",
                                        self.product_format(self.fmt(xa.name), self.fmt(xb.name)), a.key)
                    ops.append(Op("mul", prod, (xa.name, xb.name)))
                    bx = xa.bound * xb.bound + u_floor
                    q1 = self.floor_view(ops, f"E{tag}.y{n}", prod, bx, "product", a.key)
                    const = self.declare(f"E{tag}.k{n}", "constant", format_for(abs(k) * self.u, self.f, True),
                                         a.key)
                    ops.append(Op("load", const, (), control=None, scaled=k))
                    prod2 = self.declare(f"E{tag}.z{n}", "product",
                                         self.product_format(self.fmt(q1), self.fmt(const)), a.key)
                    ops.append(Op("mul", prod2, (q1, const)))
                    term_bound = abs(k) * self.u * bx + u_floor
                    terms.append((self.floor_view(ops, f"E{tag}.w{n}", prod2, term_bound, "energy", a.key),
                                  term_bound))
                    self.allowance += (u_floor + abs(k * self.u - coef) * bx
                                       + abs(coef) * (u_floor + xa.error * xb.bound + xa.bound * xb.error))
            if not terms:
                continue
            efmt = format_for(sum(bound for _, bound in terms), self.f, True)
            energy = self.sum_tree(ops, f"E{tag}", [t for t, _ in terms], "energy", a.key, efmt)
            plan.pairs.append(PairPlan(plan.level, a.key, b.key, ops, energy, self.opts.delta_t))


def _evo_levels(h: BoxHierarchy) -> List[int]:
    """Levels above the finest that carry interaction pairs, finest first."""
    return [L for L in range(h.max_level - 1, 1, -1) if well_separated_pairs(h, L)]


def _merge_levels(h: BoxHierarchy) -> List[int]:
    """
    Levels whose boxes get a sum or moment register, finest first. Merging runs
    down to the coarsest level that still holds four boxes; under a cutoff it
    stops at the coarsest level left with interaction pairs.
    """
    coarsest = next((L for L in range(1, h.max_level + 1) if len(h.boxes(L)) >= 4), h.max_level)
    levels = list(range(h.max_level - 1, coarsest - 1, -1))
    if h.xi is not None:
        evo = _evo_levels(h)
        levels = [L for L in levels if evo and L >= min(evo)]
    return levels


def build_plan(h: BoxHierarchy, opts: SynthesisOptions) -> SynthesisPlan:
    """Classical pass: register formats, rounded constants and overflow checks."""
    lattice = h.lattice
    if opts.spinful != lattice.spinful:
        raise SynthesisError(
            f"synthesis options spinful={opts.spinful} do not match lattice spinful={lattice.spinful}"
        )
    if opts.xi is not None and h.xi is None:
        h = level_cutoff(h, opts.xi)

    builder = _PlanBuilder(h, opts)
    onsite: List[PhaseOp] = []
    if lattice.spinful:
        for site in range(lattice.n_sites):
            up, down = _modes_of_site(lattice, site)
            onsite.append(PhaseOp(up, down, -lattice.onsite_V0 * opts.delta_t))

    direct: List[PhaseOp] = []
    for a, b in direct_pair_order(h):
        angle = -opts.delta_t / math.dist(a.center, b.center)
        sa = lattice.site_index(*a.index) if lattice.dimension == 2 else a.index[0]
        sb = lattice.site_index(*b.index) if lattice.dimension == 2 else b.index[0]
        for ma in _modes_of_site(lattice, sa):
            for mb in _modes_of_site(lattice, sb):
                direct.append(PhaseOp(ma, mb, angle))

    levels: List[LevelPlan] = []
    evo = set(_evo_levels(h))
    lower: Optional[LevelPlan] = None
    for level in _merge_levels(h):
        if opts.order_p == 0:
            plan = builder.zeroth_level(level, lower)
            if level in evo:
                builder.zeroth_pairs(plan)
        else:
            if level == h.max_level - 1:
                plan = builder.moments_from_sites(level)
            else:
                plan = builder.moments_from_children(level)
            if level in evo:
                builder.higher_pairs(plan)
        levels.append(plan)
        lower = plan

    plan = SynthesisPlan(hierarchy=h, opts=opts, registers=builder.registers, onsite=onsite,
                         direct=direct, levels=levels, allowance=builder.allowance)
    logger.info(f"✅ Plan for {lattice.width}x{lattice.rows} (p={opts.order_p}): "
                f"{len(direct)} direct phases, {sum(len(lp.pairs) for lp in levels)} Evo pairs, "
                f"{len(builder.registers)} registers")
    return plan


# === Emission ===
class _Emitter:
    def __init__(self, plan: SynthesisPlan):
        self.plan = plan
        self.h = plan.hierarchy
        self.opts = plan.opts
        lattice = plan.lattice
        self.alloc = QubitAllocator(0)
        self.system = self.alloc.register("system", "system", FixedPointFormat(lattice.n_modes, 0, False))
        self.regs: Dict[str, Register] = {}
        self.allocated: Dict[str, Register] = {"system": self.system}
        for mode in range(lattice.n_modes):
            self.regs[f"n{mode}"] = self.system.view(mode, FixedPointFormat(1, 0, False), name=f"n{mode}")
        self.pieces: List[Circuit] = []

    def reg(self, name: str) -> Register:
        if name not in self.regs:
            pr = self.plan.registers[name]
            r = self.alloc.register(name, pr.role, pr.fmt, level=pr.box[0], box=pr.box)
            self.regs[name] = r
            self.allocated[name] = r
        return self.regs[name]

    def op(self, op: Op, level: int, rename: Dict[str, str]) -> Optional[Circuit]:
        def arg(n: str) -> Register:
            return self.reg(rename.get(n, n))

        if op.kind == "view":
            src = arg(op.args[0])
            pr = self.plan.registers[op.out]
            self.regs[op.out] = src.view(op.lo, pr.fmt, name=op.out)
            return None
        out = self.reg(op.out)
        out_box = self.plan.registers[op.out].box
        if op.kind == "load":
            control = None if op.control is None else self.regs[f"n{op.control}"].qubits[0]
            c = const_load_pattern(control, out.fmt.to_pattern(op.scaled), out, label=f"load:{op.out}", level=level)
            if control is not None and self.plan.registers[f"n{op.control}"].box != out_box:
                b = c.blocks[0]
                c = Circuit(c.registers, (Block(b.kind, b.qubits, b.template, b.label, b.level,
                                                movers=(0,), anchor=1, operand_bits=b.operand_bits),))
            return c
        srcs = [arg(n) for n in op.args]
        movers = [r for n, r in zip(op.args, srcs) if self.plan.registers[n].box != out_box]
        if op.kind == "add":
            return build_adder(srcs[0], srcs[1], out, self.alloc, label=f"add:{op.out}", level=level,
                               movers=movers, anchor=out)
        if op.kind == "sum":
            return build_box_sum(srcs, out, self.alloc, label=f"sum:{op.out}", level=level,
                                 movers=movers, anchor=out)
        if op.kind == "mul":
            return build_multiplier(srcs[0], srcs[1], out, self.alloc, label=f"mul:{op.out}", level=level,
                                    movers=movers, anchor=out)
        raise SynthesisError(f"unknown plan op '{op.kind}'")

    def run_ops(self, ops: Sequence[Op], level: int, rename: Optional[Dict[str, str]] = None) -> List[Circuit]:
        done = []
        for op in ops:
            c = self.op(op, level, rename or {})
            if c is not None:
                done.append(c)
                self.pieces.append(c)
        return done

    def direct_block(self, op: PhaseOp) -> Circuit:
        qa = self.regs[f"n{op.mode_a}"].qubits[0]
        qb = self.regs[f"n{op.mode_b}"].qubits[0]
        template = Template((Gate("CPHASE", (0, 1), op.angle),), 2)
        block = Block("direct", (qa, qb), template, f"direct:{op.mode_a}-{op.mode_b}", self.h.max_level,
                      movers=(1,), anchor=0)
        return Circuit((), (block,))

    def copies(self, lp: LevelPlan) -> Tuple[Dict[Tuple[BoxKey, int], Dict[str, str]], List[Circuit]]:
        """COPY every part register of a box once per extra interaction partner."""
        mapping: Dict[Tuple[BoxKey, int], Dict[str, str]] = {}
        done: List[Circuit] = []
        for key, parts in lp.parts.items():
            partners = len(self.h.interactions[key])
            if partners < 2:
                continue
            for part in parts:
                src = self.reg(part)
                dests = []
                for n in range(1, partners):
                    name = f"{part}#c{n}"
                    r = self.alloc.register(name, "copy", src.fmt, level=lp.level, box=key)
                    self.allocated[name] = r
                    self.regs[name] = r
                    dests.append(r)
                    mapping.setdefault((key, n), {})[part] = name
                c = build_copy(src, dests, use_fanout=self.opts.use_fanout, label=f"copy:{part}", level=lp.level)
                done.append(c)
                self.pieces.append(c)
        return mapping, done

    def emit(self) -> Circuit:
        plan = self.plan
        for op in plan.direct:
            self.pieces.append(self.direct_block(op))

        computed: List[Circuit] = []
        for lp in plan.levels:
            computed += self.run_ops(lp.ops, lp.level)
            if not lp.pairs:
                continue
            mapping: Dict[Tuple[BoxKey, int], Dict[str, str]] = {}
            copied: List[Circuit] = []
            if self.opts.use_copy:
                mapping, copied = self.copies(lp)
            for pair in lp.pairs:
                rename: Dict[str, str] = {}
                if mapping:
                    ia = self.h.interactions[pair.a].index(pair.b)
                    ib = self.h.interactions[pair.b].index(pair.a)
                    rename.update(mapping.get((pair.a, ia), {}))
                    rename.update(mapping.get((pair.b, ib), {}))
                forward = self.run_ops(pair.ops, lp.level, rename)
                ladder = build_phase_ladder(self.regs[pair.ladder_src], pair.t_eff,
                                            label=f"ladder:{pair.ladder_src}", level=lp.level)
                self.pieces.append(ladder)
                for c in reversed(forward):
                    self.pieces.append(invert(c))
            for c in reversed(copied):
                self.pieces.append(invert(c))
        for c in reversed(computed):
            self.pieces.append(invert(c))

        blocks: List[Block] = []
        for c in self.pieces:
            blocks.extend(c.blocks)
        registers = dict(self.allocated)
        for c in self.pieces:
            for r in c.registers:
                if r.role == "scratch":
                    registers.setdefault(r.name, r)
        return Circuit(registers=tuple(registers.values()), blocks=tuple(blocks))


def emit_circuit(plan: SynthesisPlan) -> Circuit:
    c = _Emitter(plan).emit()
    logger.info(f"✅ Emitted circuit: {c.n_qubits} qubits, {len(c.blocks)} blocks, {c.gate_count()} gates")
    return c


# === Public entry points ===
def synth_zeroth(h: BoxHierarchy, opts: SynthesisOptions) -> Circuit:
    """0th-order scheme: box occupation sums, products and phase ladders."""
    if opts.order_p != 0:
        raise SynthesisError(f"synth_zeroth builds the order-0 scheme, got order_p={opts.order_p}")
    return emit_circuit(build_plan(h, opts))


def synth_higher(h: BoxHierarchy, opts: SynthesisOptions) -> Circuit:
    """Multipole scheme with moment registers, M2M translation and per-pair energy registers."""
    if opts.order_p < 1:
        raise SynthesisError("synth_higher needs order_p >= 1; use synth_zeroth for the order-0 scheme")
    return emit_circuit(build_plan(h, opts))


def synth_evo_gate(reg_a: Register, reg_b: Register, t_eff: EffectiveTime,
                   alloc: Optional[QubitAllocator] = None, level: Optional[int] = None) -> Circuit:
    """Multiplier -> phase ladder -> inverse multiplier; net phase exp(-i t' N_A N_B)."""
    alloc = alloc or QubitAllocator.after((reg_a, reg_b))
    signed = reg_a.fmt.signed or reg_b.fmt.signed
    fmt = FixedPointFormat(reg_a.width + reg_b.width - (1 if signed else 0)
                           - reg_a.fmt.fraction_bits - reg_b.fmt.fraction_bits,
                           reg_a.fmt.fraction_bits + reg_b.fmt.fraction_bits, signed)
    product = alloc.register(f"P:{reg_a.name}*{reg_b.name}", "product", fmt, level=level)
    mul = build_multiplier(reg_a, reg_b, product, alloc, level=level, movers=(reg_b,), anchor=product)
    ladder = build_phase_ladder(product, t_eff.value, level=level)
    return compose(mul, ladder, invert(mul))


def synth_spinful_adapter(c: Circuit, lattice: LatticeSpec, delta_t: float) -> Circuit:
    """
    Prepends the on-site term V0 n_up n_down as one CPHASE per site; this is
    the only place on-site gates enter a circuit. The spinful box sums (two
    qubits per site, one extra bit per box register) come from the plan itself.
    """
    if not lattice.spinful:
        raise SynthesisError("spinful adapter applied to a spinless lattice")
    system = c.registers_with_role("system")
    if not system or sum(r.width for r in system) != lattice.n_modes:
        raise SynthesisError(
            f"circuit system register does not hold two qubits per site ({lattice.n_modes} expected)"
        )
    if any(b.kind == "onsite" for b in c.blocks):
        raise SynthesisError("circuit already carries on-site blocks")
    qubits = c.system_qubits
    blocks = []
    for site in range(lattice.n_sites):
        template = Template((Gate("CPHASE", (0, 1), -lattice.onsite_V0 * delta_t),), 2)
        blocks.append(Block("onsite", (qubits[2 * site], qubits[2 * site + 1]), template, f"onsite:{site}"))
    return Circuit(registers=c.registers, blocks=tuple(blocks) + c.blocks)


def synthesize(h: BoxHierarchy, opts: SynthesisOptions) -> Circuit:
    """Dispatch on order_p; spinful lattices get the on-site layer."""
    c = synth_zeroth(h, opts) if opts.order_p == 0 else synth_higher(h, opts)
    if h.lattice.spinful:
        c = synth_spinful_adapter(c, h.lattice, opts.delta_t)
    return c
