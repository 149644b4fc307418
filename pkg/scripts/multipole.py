# File: scripts/multipole.py (Q2FMM)
"""
Solid-harmonic mathematics for the Coulomb kernel.

Conventions (complex, Racah-normalized spherical harmonics C_lm, Condon-Shortley
phase):

    R_lm(r) = r^l C_lm / sqrt((l-m)! (l+m)!)
    I_lm(r) = sqrt((l-m)! (l+m)!) C_lm / r^(l+1)

With this pair of scalings the addition theorem R_lm(a+b) = sum R_jk(a) R_{l-j,m-k}(b)
holds term by term, so moment translation is exact, and

    1/|r_a - r_b| = sum_{l,m,j,k} (-1)^j M^A_lm conj(I_{l+j,m+k}(r_AB)) M^B_jk

with r_AB = center_B - center_A. Only m >= 0 coefficients are stored;
X_{l,-m} = (-1)^m conj(X_lm) for every harmonic and for moments of real charges.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.models import LatticeSpec
from scripts.errors import MultipoleError, SeparationError, SingularityError
from scripts.hierarchy import (Box, BoxHierarchy, BoxKey, box_sites, build_hierarchy,
                               finest_near_pairs, iter_pair_levels, lattice_positions)

logger = logging.getLogger(__name__)


# --- Index bookkeeping ---
@dataclass(frozen=True)
class SolidHarmonicIndex:
    ell: int
    m: int

    def __post_init__(self):
        if self.ell < 0 or abs(self.m) > self.ell:
            raise MultipoleError(f"invalid solid-harmonic index (ell={self.ell}, m={self.m})")


def lm_index(ell: int, m: int) -> int:
    """Packed index for m >= 0 storage."""
    return ell * (ell + 1) // 2 + m


def full_index(ell: int, m: int) -> int:
    """Index over -ell..ell storage."""
    return ell * ell + ell + m


def n_packed(p: int) -> int:
    return (p + 1) * (p + 2) // 2


def iter_lm(p: int) -> Iterable[Tuple[int, int]]:
    for ell in range(p + 1):
        for m in range(ell + 1):
            yield ell, m


@lru_cache(maxsize=None)
def bound_factor(ell: int, m: int) -> float:
    """sqrt((l-m)! (l+m)!), exact integers until the square root."""
    return math.sqrt(math.factorial(ell - abs(m)) * math.factorial(ell + abs(m)))


# --- Harmonic tables ---
def _as_points(r) -> np.ndarray:
    pts = np.asarray(r, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] == 2:
        pts = np.concatenate([pts, np.zeros(pts.shape[:-1] + (1,))], axis=-1)
    return pts


def regular_table(p: int, r) -> np.ndarray:
    """
    R_lm for l <= p, m >= 0, at every point in `r`; shape (n_points, n_packed(p)).

    R_lm = r^l C_lm / sqrt((l-m)! (l+m)!) = r^l P_l^m(cos theta) e^{i m phi} / (l+m)!,
    paired with I_lm = sqrt((l-m)! (l+m)!) C_lm / r^(l+1); under this pairing the
    addition theorem and the M2M shift carry no extra factorial weights.
    """
    pts = _as_points(r)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    w = x + 1j * y
    r2 = x * x + y * y + z * z
    out = np.zeros((pts.shape[0], n_packed(p)), dtype=complex)
    out[:, 0] = 1.0
    for ell in range(p):
        for m in range(ell + 1):
            prev = out[:, lm_index(ell - 1, m)] if m <= ell - 1 else 0.0
            out[:, lm_index(ell + 1, m)] = ((2 * ell + 1) * z * out[:, lm_index(ell, m)] - r2 * prev) / (
                (ell + 1 - m) * (ell + 1 + m))
        out[:, lm_index(ell + 1, ell + 1)] = -w * out[:, lm_index(ell, ell)] / (2 * (ell + 1))
    return out


def irregular_table(p: int, r) -> np.ndarray:
    """I_lm for l <= p, m >= 0; raises SingularityError at the origin."""
    pts = _as_points(r)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    r2 = x * x + y * y + z * z
    if np.any(r2 == 0.0):
        raise SingularityError("irregular solid harmonic evaluated at r = 0")
    w = x + 1j * y
    out = np.zeros((pts.shape[0], n_packed(p)), dtype=complex)
    out[:, 0] = 1.0 / np.sqrt(r2)
    for ell in range(p):
        for m in range(ell + 1):
            prev = out[:, lm_index(ell - 1, m)] if m <= ell - 1 else 0.0
            out[:, lm_index(ell + 1, m)] = ((2 * ell + 1) * z * out[:, lm_index(ell, m)]
                                            - (ell * ell - m * m) * prev) / r2
        out[:, lm_index(ell + 1, ell + 1)] = -(2 * ell + 1) * w * out[:, lm_index(ell, ell)] / r2
    return out


def expand_negative_m(packed: np.ndarray, p: int) -> np.ndarray:
    """(…, n_packed) m >= 0 coefficients -> (…, (p+1)^2) over m = -l..l."""
    full = np.zeros(packed.shape[:-1] + ((p + 1) ** 2,), dtype=complex)
    for ell, m in iter_lm(p):
        value = packed[..., lm_index(ell, m)]
        full[..., full_index(ell, m)] = value
        if m > 0:
            full[..., full_index(ell, -m)] = (-1) ** m * np.conj(value)
    return full


def _pick(table: np.ndarray, idx: SolidHarmonicIndex) -> complex:
    value = complex(table[0, lm_index(idx.ell, abs(idx.m))])
    if idx.m < 0:
        return (-1) ** abs(idx.m) * value.conjugate()
    return value


def regular_solid_harmonic(idx: SolidHarmonicIndex, r: Sequence[float]) -> complex:
    return _pick(regular_table(idx.ell, r), idx)


def irregular_solid_harmonic(idx: SolidHarmonicIndex, r: Sequence[float]) -> complex:
    return _pick(irregular_table(idx.ell, r), idx)


def coulomb_kernel(ra: Sequence[float], rb: Sequence[float]) -> float:
    d = math.dist(tuple(ra), tuple(rb))
    if d == 0.0:
        raise SingularityError(f"coincident points {tuple(ra)} and {tuple(rb)} in the Coulomb kernel")
    return 1.0 / d


# --- States ---
@dataclass(frozen=True, eq=False)
class FockState:
    """Computational-basis occupation; spinful lattices store modes 2s (up) and 2s+1 (down)."""
    lattice: LatticeSpec
    occupations: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupations, dtype=np.int64)
        if occ.shape != (self.lattice.n_modes,):
            raise MultipoleError(
                f"state has {occ.size} modes, lattice expects {self.lattice.n_modes}"
            )
        if np.any((occ != 0) & (occ != 1)):
            raise MultipoleError("mode occupations must be 0 or 1")
        if occ.sum() > self.lattice.q:
            raise MultipoleError(f"state holds {int(occ.sum())} electrons, Q={self.lattice.q}")
        object.__setattr__(self, "occupations", occ)

    @property
    def charges(self) -> np.ndarray:
        """Per-site electron count (0..2 when spinful)."""
        return self.occupations.reshape(self.lattice.n_sites, self.lattice.modes_per_site).sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.occupations.sum())

    @classmethod
    def from_sites(cls, lattice: LatticeSpec, occupied: Iterable[int]) -> "FockState":
        occ = np.zeros(lattice.n_modes, dtype=np.int64)
        for mode in occupied:
            occ[mode] = 1
        return cls(lattice, occ)

    @classmethod
    def from_bits(cls, lattice: LatticeSpec, value: int) -> "FockState":
        """Mode k is bit k of `value`."""
        occ = np.array([(value >> k) & 1 for k in range(lattice.n_modes)], dtype=np.int64)
        return cls(lattice, occ)

    def to_bits(self) -> int:
        return int(sum(int(b) << k for k, b in enumerate(self.occupations)))


def random_fock_state(lattice: LatticeSpec, rng: np.random.Generator, filling: float = 0.5) -> FockState:
    n_electrons = min(int(round(filling * lattice.n_sites)), lattice.q)
    occ = np.zeros(lattice.n_modes, dtype=np.int64)
    occ[rng.choice(lattice.n_modes, size=n_electrons, replace=False)] = 1
    return FockState(lattice, occ)


# --- Moments ---
@dataclass(frozen=True, eq=False)
class MomentSet:
    order_p: int
    coefficients: np.ndarray
    center: Tuple[float, float, float]
    radius: float
    normalization: np.ndarray
    box_key: Optional[BoxKey] = None

    def get(self, ell: int, m: int) -> complex:
        value = complex(self.coefficients[lm_index(ell, abs(m))])
        return (-1) ** abs(m) * value.conjugate() if m < 0 else value

    def normalized(self) -> np.ndarray:
        """Coefficients divided by r^l / sqrt((l-m)!(l+m)!); magnitudes bounded by box occupancy."""
        return self.coefficients / self.normalization


def normalization_factors(p: int, radius: float) -> np.ndarray:
    return np.array([radius ** ell / bound_factor(ell, m) for ell, m in iter_lm(p)])


def _make_moments(p: int, coeffs: np.ndarray, box: Box) -> MomentSet:
    return MomentSet(order_p=p, coefficients=coeffs, center=box.center, radius=box.radius,
                     normalization=normalization_factors(p, box.radius), box_key=box.key)


def compute_moments(box: Box, state: FockState, p: int) -> MomentSet:
    """M_lm = sum over sites a in box of R_lm(r_a - center) q_a."""
    lattice = state.lattice
    side = lattice.width >> box.level
    i, j = box.index
    xs = np.arange(i * side, (i + 1) * side)
    ys = np.arange(j * side, (j + 1) * side) if lattice.dimension == 2 else np.array([0])
    sites = (ys[:, None] * lattice.width + xs[None, :]).ravel()
    q = state.charges[sites].astype(float)
    coeffs = np.zeros(n_packed(p), dtype=complex)
    if q.any():
        offsets = lattice_positions(lattice)[sites] - np.asarray(box.center)
        coeffs = (q[:, None] * regular_table(p, offsets)).sum(axis=0)
    return _make_moments(p, coeffs, box)


@lru_cache(maxsize=None)
def _m2m_terms(p: int) -> Tuple[Tuple[int, int, int, int, int], ...]:
    """(out_packed, child_l, child_k, shift_l, shift_m) for every M2M contribution."""
    terms = []
    for ell, m in iter_lm(p):
        for j in range(ell + 1):
            for k in range(-j, j + 1):
                if abs(m - k) <= ell - j:
                    terms.append((lm_index(ell, m), j, k, ell - j, m - k))
    return tuple(terms)


def translate_m2m(child: MomentSet, d: Sequence[float]) -> MomentSet:
    """Re-expand child moments about child.center + d (d = parent center - child center)."""
    p = child.order_p
    d = np.asarray(d, dtype=float)
    if d.size == 2:
        d = np.append(d, 0.0)
    shift = expand_negative_m(regular_table(p, -d)[0], p)
    src = expand_negative_m(child.coefficients, p)
    out = np.zeros(n_packed(p), dtype=complex)
    for target, j, k, sl, sm in _m2m_terms(p):
        out[target] += shift[full_index(sl, sm)] * src[full_index(j, k)]
    center = tuple(float(c) for c in np.asarray(child.center) + d)
    return MomentSet(order_p=p, coefficients=out, center=center, radius=child.radius,
                     normalization=child.normalization, box_key=None)


def aggregate_children(children: Sequence[MomentSet], parent: Box) -> MomentSet:
    """Sum of the children's moments translated to the parent center."""
    if not children:
        raise MultipoleError("aggregate_children needs at least one child moment set")
    p = children[0].order_p
    total = np.zeros(n_packed(p), dtype=complex)
    for child in children:
        if child.box_key is not None:
            level, i, j = child.box_key
            if (level - 1, i // 2, j // 2) != parent.key:
                raise MultipoleError(f"box {child.box_key} is not a child of {parent.key}")
        if child.order_p != p:
            raise MultipoleError("children carry moment sets of different order")
        d = np.asarray(parent.center) - np.asarray(child.center)
        total += translate_m2m(child, d).coefficients
    return _make_moments(p, total, parent)


# --- Pair energies ---
@lru_cache(maxsize=None)
def pair_term_indices(p: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Full-index arrays (a, b, irregular, sign) over every (l,m,j,k) with l + j <= p."""
    ia, ib, ic, sign = [], [], [], []
    for ell in range(p + 1):
        for j in range(p + 1 - ell):
            for m in range(-ell, ell + 1):
                for k in range(-j, j + 1):
                    ia.append(full_index(ell, m))
                    ib.append(full_index(j, k))
                    ic.append(full_index(ell + j, m + k))
                    sign.append(-1.0 if j % 2 else 1.0)
    return np.array(ia), np.array(ib), np.array(ic), np.array(sign)


def pair_energies(ma: np.ndarray, mb: np.ndarray, r_ab: np.ndarray, p: int) -> np.ndarray:
    """Vectorized pairing: ma, mb are (n_pairs, n_packed) moments, r_ab is (n_pairs, 3)."""
    ia, ib, ic, sign = pair_term_indices(p)
    fa = expand_negative_m(np.atleast_2d(ma), p)
    fb = expand_negative_m(np.atleast_2d(mb), p)
    fi = expand_negative_m(irregular_table(p, r_ab), p)
    terms = sign * fa[:, ia] * np.conj(fi[:, ic]) * fb[:, ib]
    total = terms.sum(axis=1)
    scale = np.abs(terms).sum(axis=1)
    residue = np.abs(total.imag)
    if np.any(residue > 1e-8 * np.maximum(scale, 1e-300)):
        logger.warning(f"⚠️ pair energy imaginary residue up to {residue.max():.3e}")
    return total.real


def pair_energy(ma: MomentSet, mb: MomentSet, r_ab: Sequence[float], p: int) -> float:
    """
    Truncated multipole interaction energy of two well-separated boxes.

    Args:
        ma, mb (MomentSet): moments about the two box centers.
        r_ab: center_B - center_A.
        p (int): truncation order, l + j <= p.

    Returns:
        float: real part of the truncated sum.
    """
    r = np.asarray(r_ab, dtype=float)
    if r.size == 2:
        r = np.append(r, 0.0)
    dist = float(np.linalg.norm(r))
    if dist <= max(ma.radius, mb.radius):
        raise SeparationError(
            f"boxes at distance {dist:.4g} are not well separated (radii {ma.radius:.4g}, {mb.radius:.4g})"
        )
    if p > min(ma.order_p, mb.order_p):
        raise MultipoleError(f"order p={p} exceeds stored moment order")
    sub_a = ma.coefficients[:n_packed(p)]
    sub_b = mb.coefficients[:n_packed(p)]
    return float(pair_energies(sub_a[None, :], sub_b[None, :], r[None, :], p)[0])


# --- Whole-lattice energies ---
def level_moments(h: BoxHierarchy, charges: np.ndarray, level: int, p: int) -> np.ndarray:
    """(n_boxes, n_packed) moments of every box at `level`, in h.boxes(level) order."""
    boxes = h.boxes(level)
    positions = lattice_positions(h.lattice)
    out = np.zeros((len(boxes), n_packed(p)), dtype=complex)
    for n, b in enumerate(boxes):
        sites = box_sites(h, b)
        q = charges[sites].astype(float)
        if q.any():
            out[n] = (q[:, None] * regular_table(p, positions[sites] - np.asarray(b.center))).sum(axis=0)
    return out


def near_field_energy(h: BoxHierarchy, charges: np.ndarray) -> float:
    positions = lattice_positions(h.lattice)
    total = 0.0
    for a, b in finest_near_pairs(h):
        sa, sb = box_sites(h, a)[0], box_sites(h, b)[0]
        if charges[sa] and charges[sb]:
            total += charges[sa] * charges[sb] / float(np.linalg.norm(positions[sa] - positions[sb]))
    return total


def fmm_level_energies(h: BoxHierarchy, state: FockState, p: int) -> Dict[int, float]:
    """Interaction-list energy per level (finest level included)."""
    charges = state.charges
    energies: Dict[int, float] = {}
    for level, pairs in iter_pair_levels(h):
        moments = level_moments(h, charges, level, p)
        order = {b.key: n for n, b in enumerate(h.boxes(level))}
        ia = np.array([order[a.key] for a, _ in pairs])
        ib = np.array([order[b.key] for _, b in pairs])
        r_ab = np.array([np.asarray(b.center) - np.asarray(a.center) for a, b in pairs])
        energies[level] = float(pair_energies(moments[ia], moments[ib], r_ab, p).sum())
    return energies


def fmm_total_energy(h: BoxHierarchy, state: FockState, p: int) -> float:
    """Sum of interaction-list pair energies over all levels plus the exact finest near field."""
    if state.total < 2:
        return 0.0
    return sum(fmm_level_energies(h, state, p).values()) + near_field_energy(h, state.charges)


def brute_force_energy(state: FockState) -> float:
    """(1/2) sum_{a != b} q_a q_b / |r_a - r_b| over per-site charges."""
    charges = state.charges
    occupied = np.nonzero(charges)[0]
    if occupied.size < 2:
        return 0.0
    pos = lattice_positions(state.lattice)[occupied]
    q = charges[occupied].astype(float)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    iu = np.triu_indices(occupied.size, k=1)
    return float((q[:, None] * q[None, :])[iu].dot(1.0 / dist[iu]))


def relative_error(approx: float, exact: float) -> float:
    if exact == 0.0:
        return 0.0 if approx == 0.0 else math.inf
    return abs(approx - exact) / abs(exact)


def fmm_error_sweep(lattice: LatticeSpec, states: Sequence[FockState], p_values: Sequence[int],
                    h: Optional[BoxHierarchy] = None) -> List[Dict[str, float]]:
    """Median relative error of fmm_total_energy against brute_force_energy per order p."""
    if len(states) < 10:
        raise MultipoleError(f"error sweep needs at least 10 states, got {len(states)}")
    h = h or build_hierarchy(lattice)
    exact = [brute_force_energy(s) for s in states]
    rows = []
    for p in p_values:
        errors = [relative_error(fmm_total_energy(h, s, p), e) for s, e in zip(states, exact)]
        rows.append({"p": p, "median_rel_error": float(np.median(errors)), "max_rel_error": float(np.max(errors))})
        logger.info(f"p={p}: median relative error {rows[-1]['median_rel_error']:.3e}")
    return rows


# --- Error bounds ---
def truncation_error_bound(h: BoxHierarchy, p: int, state: Optional[FockState] = None) -> Dict[int, float]:
    """
    Per-level bound sum_pairs Q_A Q_B / (R - r_A - r_B) * ((r_A + r_B) / R)^(p+1)
    on the truncation error of the interaction-list energy. Without a state,
    Q_A is the number of modes in box A.
    """
    if state is not None:
        charges = state.charges.astype(float)
    else:
        charges = np.full(h.lattice.n_sites, float(h.lattice.modes_per_site))
    bounds: Dict[int, float] = {}
    for level, pairs in iter_pair_levels(h):
        total = 0.0
        # single-site boxes carry exact moments
        if level == h.max_level:
            bounds[level] = 0.0
            continue
        for a, b in pairs:
            qa = float(charges[box_sites(h, a)].sum())
            qb = float(charges[box_sites(h, b)].sum())
            if qa == 0.0 or qb == 0.0:
                continue
            big_r = math.dist(a.center, b.center)
            small_r = a.radius + b.radius
            if big_r <= small_r:
                total = math.inf
                break
            total += qa * qb / (big_r - small_r) * (small_r / big_r) ** (p + 1)
        bounds[level] = total
    return bounds


def order_for_tolerance(r_over_R: float, tolerance: float) -> int:
    """Smallest p with (r/R)^(p+1) <= tolerance."""
    if not 0.0 < r_over_R < 1.0:
        raise MultipoleError(f"r/R must lie in (0, 1), got {r_over_R}")
    if tolerance <= 0.0:
        raise MultipoleError("tolerance must be positive")
    if tolerance >= 1.0:
        return 0
    return max(0, int(math.ceil(math.log(tolerance) / math.log(r_over_R) - 1e-12)) - 1)


def evolution_error_bound(amplitudes: np.ndarray, energy_errors: np.ndarray, delta_t: float) -> float:
    """sum_i |alpha_i|^2 |eps_i| delta_t for a superposition of basis states."""
    weights = np.abs(np.asarray(amplitudes)) ** 2
    return float(np.dot(weights, np.abs(np.asarray(energy_errors))) * delta_t)

