"""Exception hierarchy.

Every error class carries a distinct process exit code so the CLI can map
failures one-to-one onto documented exit statuses (see README).
"""


class JacshapeError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class UsageError(JacshapeError):
    """Bad command line or configuration input."""

    exit_code = 2


class InputIOError(JacshapeError):
    """Unreadable or malformed input file."""

    exit_code = 3


class ShapeMismatchError(JacshapeError):
    """Fields or maps defined on incompatible grids."""

    exit_code = 4


class DegenerateDomainError(JacshapeError):
    """Domain with no interior, disconnected mask, or too few nodes."""

    exit_code = 5


class CollarError(JacshapeError):
    """Collar thickness outside the representable range."""

    exit_code = 6


class KernelUnderresolvedError(JacshapeError):
    """Mollifier radius below two grid cells."""

    exit_code = 7


class InconsistentDatumError(JacshapeError):
    """Mass / mean compatibility condition violated."""

    exit_code = 8


class PositivityError(JacshapeError):
    """A density that must stay positive is not."""

    exit_code = 9


class SolverStallError(JacshapeError):
    """Linear solver failed to reach its residual tolerance."""

    exit_code = 10

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class NonzeroPeriodError(JacshapeError):
    """The collar 1-form has a nonzero period around the band."""

    exit_code = 11


class UnsupportedTopologyError(JacshapeError):
    """Multiply connected boundary where a single component is required."""

    exit_code = 12


class SupportDistanceError(JacshapeError):
    """supp(f-1) closer to the boundary than the declared distance."""

    exit_code = 13

    def __init__(self, message, offending_nodes=None):
        super().__init__(message)
        self.offending_nodes = list(offending_nodes or [])


class ContractionFailureError(JacshapeError):
    """Fixed-point iteration diverged or exceeded its iteration budget."""

    exit_code = 14


class BracketFailureError(JacshapeError):
    """Measure-correction bracket does not enclose the target mass."""

    exit_code = 15

    def __init__(self, message, m_minus=None, m_plus=None):
        super().__init__(message)
        self.m_minus = m_minus
        self.m_plus = m_plus


class OrientationLossError(JacshapeError):
    """A map's Jacobian determinant is nonpositive somewhere."""

    exit_code = 16


class InversionFailureError(JacshapeError):
    """Newton inversion diverged at one or more nodes."""

    exit_code = 17

    def __init__(self, message, failed_nodes=None):
        super().__init__(message)
        self.failed_nodes = list(failed_nodes or [])


class FlowAccuracyError(JacshapeError):
    """Flow determinant residual far above its expected level."""

    exit_code = 18


class ChangeOfVariablesDriftError(JacshapeError):
    """Pulled-back density lost too much mass (grid too coarse)."""

    exit_code = 19


class ExhaustionFailureError(JacshapeError):
    """Empty or disconnected subdomain during exhaustion."""

    exit_code = 20


class UnsupportedOrderError(JacshapeError):
    """Requested differentiability order is not supported."""

    exit_code = 21


class OutOfRangeError(JacshapeError):
    """Evaluation point outside the bounding box."""

    exit_code = 22


class DegenerateRegionError(JacshapeError):
    """Node region too small for the requested statistic."""

    exit_code = 23


class InconsistentMapError(JacshapeError):
    """A given map violates the volume-correction preconditions."""

    exit_code = 24


class ResidualToleranceError(JacshapeError):
    """A completed solve's residuals exceed the configured tolerances."""

    exit_code = 30


class TrajectoryEscapeWarning(UserWarning):
    """Flow trajectory drifted outside the mask interior."""


def exit_code_table():
    """Return {exit_code: class name} for every error class, for docs/tests."""
    table = {}
    stack = [JacshapeError]
    while stack:
        cls = stack.pop()
        table[cls.exit_code] = cls.__name__
        stack.extend(cls.__subclasses__())
    return dict(sorted(table.items()))
