# File: scripts/errors.py (Q2FMM)
"""
Exception hierarchy shared by the pipeline steps and the CLI.

The CLI maps everything derived from Q2FMMError except InvariantViolation to
exit code 1 (the input was wrong); InvariantViolation and anything unexpected
map to exit code 2.
"""


class Q2FMMError(Exception):
    """Base class for every error raised by the toolkit."""
    pass


class ConfigError(Q2FMMError):
    """Configuration file or flag could not be validated."""
    pass


class HierarchyError(Q2FMMError):
    """Lattice cannot be organized into a quadtree (or binary tree)."""
    pass


class MultipoleError(Q2FMMError):
    """Invalid input to the solid-harmonic / multipole mathematics."""
    pass


class SingularityError(MultipoleError):
    """Kernel or irregular harmonic evaluated at zero separation."""
    pass


class SeparationError(MultipoleError):
    """Multipole pairing requested for boxes that are not well separated."""
    pass


class ArithmeticWidthError(Q2FMMError):
    """Register widths are incompatible with the requested arithmetic block."""
    pass


class RepresentationError(Q2FMMError):
    """A value is not representable in the requested fixed-point format."""
    pass


class SynthesisError(Q2FMMError):
    """Circuit synthesis was asked for something it cannot build."""
    pass


class RegisterOverflowError(SynthesisError):
    """A register's worst-case value exceeds its fixed-point format."""

    def __init__(self, register_name: str, bound: float, limit: float):
        self.register_name = register_name
        self.bound = bound
        self.limit = limit
        super().__init__(
            f"register '{register_name}' overflows: worst-case magnitude {bound:.6g} "
            f"exceeds representable limit {limit:.6g}; lower eps_b precision demands or raise Q"
        )


class SimulationModeError(Q2FMMError):
    """Gate kind cannot be propagated in basis-state mode."""
    pass


class SimulationCapError(Q2FMMError):
    """Requested simulation exceeds the configured qubit/dimension cap."""
    pass


class LayoutCapacityError(Q2FMMError):
    """Hardware grid cells cannot hold all registers placed on them."""
    pass


class InvariantViolation(Q2FMMError):
    """An internal consistency check failed; this is a bug, not a user error."""
    pass
