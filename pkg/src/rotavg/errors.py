"""Exception types shared across the package.

Builtin exceptions are used where they already say the right thing
(IndexError for bad vertex ids, ValueError for plain argument-range
violations, ZeroDivisionError for a zero reference objective).
"""


class RotavgError(Exception):
    """Base class for all domain errors raised by this package."""


class NotSymmetricError(RotavgError):
    """Matrix expected to be symmetric deviates beyond tolerance."""


class IndefiniteInputError(RotavgError):
    """Matrix expected to be PSD has an eigenvalue below -1e-6."""


class DegenerateInputError(RotavgError):
    """Nearest-rotation projection is ill-defined (rank < 2 input)."""


class ZeroQuaternionError(RotavgError):
    """Quaternion with (near-)zero norm cannot define a rotation."""


class InvalidGraphError(RotavgError):
    """Camera graph violates its invariants (self-loop, duplicate edge, bad id)."""


class DisconnectedGraphError(RotavgError):
    """Operation requires a connected camera graph."""


class IsolatedVertexError(RotavgError):
    """Coordinate update requested for a vertex with no neighbours."""


class NumericalBreakdownError(RotavgError):
    """A 3x3 kernel inside a solver step failed its numerical tolerances."""


class NotRankThreeError(RotavgError):
    """Rotation extraction requires a numerically rank-3 iterate."""


class InfeasibleDensityError(RotavgError):
    """Requested edge count falls outside [n, n(n-1)/2]."""


class MalformedLineError(RotavgError):
    """A text-format line failed to parse; carries its 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NonUnitQuaternionError(RotavgError):
    """Parsed quaternion norm deviates from 1 by more than 1e-3."""


class NotARotationError(RotavgError):
    """Parsed 3x3 block violates the rotation invariants; carries the edge."""

    def __init__(self, i: int, j: int, message: str = ""):
        detail = f" ({message})" if message else ""
        super().__init__(f"edge ({i}, {j}) is not a rotation{detail}")
        self.i = i
        self.j = j
