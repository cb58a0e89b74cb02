"""Exception taxonomy for residiff.

Every failure mode that callers are expected to handle gets its own class;
all inherit from ResidiffError so a bare `except ResidiffError` catches the
library without swallowing programming errors.
"""


class ResidiffError(Exception):
    """Base class for all residiff errors."""


class ConfigError(ResidiffError):
    """Malformed or inconsistent configuration / input file."""


class InvalidMapError(ConfigError):
    """A map description failed validation; carries the report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class OverlappingCells(InvalidMapError):
    """Two partition cells intersect with positive volume."""


class VolumeDeficit(InvalidMapError):
    """Cell volumes do not sum to the volume of the unit cube."""


class NonOrthogonalMatrix(InvalidMapError):
    """A branch matrix is not orthogonal (or not a signed permutation)."""


class TargetCubeMismatch(InvalidMapError):
    """A branch does not map its cell onto the declared target cube."""


class BoundaryUncovered(InvalidMapError):
    """Some boundary point of the unit cube has no interior preimage."""


class NonpositiveEpsilon(ResidiffError):
    """An operation requiring eps > 0 (or eps in (0, 1]) got a bad value."""


class TreeBudgetExceeded(ResidiffError):
    """Symbol-tuple enumeration exceeded its node budget."""

    def __init__(self, message, eps=None, budget=None):
        super().__init__(message)
        self.eps = eps
        self.budget = budget


class SymbolOutOfRange(ResidiffError):
    """A symbol tuple references a cell index outside 1..M."""


class UnsupportedDimension(ResidiffError):
    """The operation is not implemented for this dimension."""


class NoMixingWithinCap(ResidiffError):
    """Mixing time exceeded the iteration cap."""

    def __init__(self, message, cap=None, last_distance=None):
        super().__init__(message)
        self.cap = cap
        self.last_distance = last_distance


class SeriesDivergence(ResidiffError):
    """The corrector Neumann series failed to contract."""


class SingularSystem(ResidiffError):
    """The corrector linear system is singular."""


class MissingCorrector(ResidiffError):
    """An operation needing a solved corrector got none (or a mismatched one)."""


class WindowBudgetExceeded(ResidiffError):
    """A lattice displacement window grew past its allowed size."""


class HypothesisViolated(ResidiffError):
    """Inputs do not satisfy a documented hypothesis of the routine."""


class NotMixing(ResidiffError):
    """A finite-state chain spec fails to mix (degenerate or periodic)."""


class InvalidMinorizer(ResidiffError):
    """A claimed (beta, w) minorization is not dominated by the kernel."""


class InvalidStoppingSchedule(ResidiffError):
    """A stopping schedule is not a valid deterministic schedule."""


class BoundViolation(ResidiffError):
    """A certified inequality failed numerically."""
