# File: app/models.py (Q2FMM)
import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


# --- Lattice ---
class LatticeSpec(BaseModel):
    """Lattice geometry, spin mode and Hamiltonian coefficients.

    Sites are indexed row-major (index = y * width + x) with unit spacing.
    `dimension=1` describes a chain of `width` sites (height must be 1).
    Power-of-two widths are required only once a hierarchy is built; the dense
    simulation oracles also accept other square lattices such as 3x3.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    width: int = Field(4, ge=1)
    height: Optional[int] = None
    dimension: Literal[1, 2] = 2
    spinful: bool = False
    hopping_t: float = 1.0
    onsite_V0: float = 0.0
    electron_count_Q: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_shape(self):
        expected_height = 1 if self.dimension == 1 else self.width
        if self.height is not None and self.height != expected_height:
            if self.dimension == 1:
                raise ValueError(f"a 1D chain has height 1, got height={self.height}")
            raise ValueError(
                f"only square lattices are supported: width={self.width}, height={self.height}"
            )
        if self.dimension == 2 and self.width < 2:
            raise ValueError("a 2D lattice needs width >= 2")
        if self.electron_count_Q is not None and self.electron_count_Q > self.capacity:
            raise ValueError(
                f"electron_count_Q={self.electron_count_Q} exceeds lattice capacity {self.capacity}"
            )
        return self

    @property
    def rows(self) -> int:
        return 1 if self.dimension == 1 else self.width

    @property
    def n_sites(self) -> int:
        return self.width * self.rows

    @property
    def modes_per_site(self) -> int:
        return 2 if self.spinful else 1

    @property
    def n_modes(self) -> int:
        return self.n_sites * self.modes_per_site

    @property
    def capacity(self) -> int:
        return self.n_modes

    @property
    def q(self) -> int:
        """Electron count used for register sizing (defaults to full capacity)."""
        return self.electron_count_Q if self.electron_count_Q is not None else self.capacity

    @property
    def is_power_of_two(self) -> bool:
        return _is_power_of_two(self.width)

    @property
    def max_level(self) -> int:
        return int(round(math.log2(self.width)))

    def site_index(self, x: int, y: int) -> int:
        return y * self.width + x

    def site_xy(self, index: int) -> Tuple[int, int]:
        return index % self.width, index // self.width


# --- Synthesis ---
class SynthesisOptions(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    order_p: int = Field(0, ge=0)
    eps_b: float = Field(1.0 / 16, gt=0.0, le=1.0)
    use_copy: bool = False
    use_fanout: bool = False
    spinful: bool = False
    delta_t: float = Field(0.1, gt=0.0)
    trotter_order: Literal[1, 2] = 2
    rounding: Literal["nearest_even", "floor"] = "nearest_even"
    xi: Optional[float] = Field(None, ge=1.0)

    @property
    def fraction_bits(self) -> int:
        return int(math.ceil(math.log2(1.0 / self.eps_b) - 1e-12))


# --- Hardware ---
class HardwareModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["NearestNeighbor2D", "Shuttling", "ShuttlingFanout"] = "Shuttling"
    shuttle_depth_cost: int = Field(1, ge=1)
    fanout_depth_cost: int = Field(1, ge=1)
    arithmetic_cost_model: Literal["as_built", "literature"] = "as_built"
    cell_capacity: Optional[int] = Field(None, ge=1)

    @property
    def has_fanout(self) -> bool:
        return self.kind == "ShuttlingFanout"

    @property
    def has_shuttling(self) -> bool:
        return self.kind in ("Shuttling", "ShuttlingFanout")


# --- Sweeps ---
class SweepOptions(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sizes: List[int] = Field(default_factory=lambda: [4, 8, 16, 32, 64])
    p_values: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    n_states: int = Field(10, ge=10)
    filling: float = Field(0.5, gt=0.0, le=1.0)
    models: List[Literal["NearestNeighbor2D", "Shuttling", "ShuttlingFanout"]] = Field(
        default_factory=lambda: ["NearestNeighbor2D", "Shuttling", "ShuttlingFanout"]
    )
    q_fraction: float = Field(0.5, gt=0.0, le=1.0)
    t_total: float = Field(0.1, gt=0.0)
    step_counts: List[int] = Field(default_factory=lambda: [4, 8, 16, 32, 64])
    n_samples: int = Field(200, ge=1)

    @field_validator("sizes")
    @classmethod
    def _sizes_power_of_two(cls, sizes: List[int]) -> List[int]:
        bad = [s for s in sizes if not _is_power_of_two(s) or s < 2]
        if bad:
            raise ValueError(f"sweep sizes must be lattice widths that are powers of two >= 2: {bad}")
        return sizes

    @field_validator("step_counts")
    @classmethod
    def _positive_steps(cls, steps: List[int]) -> List[int]:
        if any(d < 1 for d in steps):
            raise ValueError("Trotter step counts must be >= 1")
        return steps


# --- Run configuration ---
class RunConfig(BaseModel):
    """Everything a command needs; validated before any run starts."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lattice: LatticeSpec = Field(default_factory=LatticeSpec)
    synthesis: SynthesisOptions = Field(default_factory=SynthesisOptions)
    hardware: HardwareModel = Field(default_factory=HardwareModel)
    sweep: SweepOptions = Field(default_factory=SweepOptions)
    out_dir: str = "q2fmm_out"
    seed: int = 0
    jobs: int = Field(1, ge=1)
    state: Optional[List[int]] = None


# --- Reports ---
class LevelCost(BaseModel):
    level: Optional[int] = None
    gates: int = 0
    swap_ops: int = 0
    shuttle_ops: int = 0
    max_route_depth: int = 0
    first_layer: int = 0
    last_layer: int = 0


class ResourceReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model_kind: str
    arithmetic: Literal["as_built", "modeled"] = "as_built"
    depth: int = 0
    gate_counts: Dict[str, int] = Field(default_factory=dict)
    total_gates: int = 0
    peak_ancillae: int = 0
    shuttle_ops: int = 0
    swap_ops: int = 0
    per_level: List[LevelCost] = Field(default_factory=list)
    layer_counts: List[int] = Field(default_factory=list)


class FitCandidate(BaseModel):
    form: str
    slope: float
    intercept: float
    r_squared: float


class FitReport(BaseModel):
    quantity: str
    model_kind: str
    candidates: List[FitCandidate]
    best: str
