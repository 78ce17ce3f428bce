class ConvexPDEError(Exception):
    """Base class for every error raised by convexpde."""
    pass


class ConstraintError(ConvexPDEError):
    pass

class InvalidConstraint(ConstraintError):
    """Raised when constraint data is malformed (σ > τ, non-unit normals, empty K(x))."""
    pass

class EllipsoidIllConditioned(ConstraintError):
    """Raised when det E(x) falls below the configured floor."""
    pass

class EmptyPolyhedron(ConstraintError):
    """Raised when the half-space intersection at x is infeasible."""
    pass

class MembershipError(ConstraintError):
    """Raised when a tangent-cone query is based at a point outside K(x)."""
    pass


class OperatorError(ConvexPDEError):
    pass

class EllipticityViolation(OperatorError):
    pass

class NonFiniteCoefficient(OperatorError):
    pass

class GridMismatch(OperatorError):
    """Raised when fields and operators live on different grids."""
    pass

class EigSolverFailure(OperatorError):
    pass


class ResolventError(ConvexPDEError):
    pass

class InadmissibleStep(ResolventError):
    """Raised when h <= 0 or h*omega >= 1."""
    pass

class SingularSystem(ResolventError):
    pass


class ForcingError(ConvexPDEError):
    pass

class ExponentOutOfRange(ForcingError):
    pass

class NonFiniteForcing(ForcingError):
    pass


class SolverError(ConvexPDEError):
    pass

class Diverged(SolverError):
    pass

class InvarianceRefused(SolverError):
    """Raised when the constrained solve is refused for lack of an invariance certificate."""
    pass

class MaxItersExceeded(SolverError):
    pass


class DegreeError(ConvexPDEError):
    pass

class ZeroOnBoundary(DegreeError):
    pass

class DegenerateZero(DegreeError):
    pass

class DegreeMismatch(DegreeError):
    """Raised when zero counting and the boundary winding number disagree."""
    pass


class TruncationError(ConvexPDEError):
    pass

class LevelSolveFailed(TruncationError):
    def __init__(self, level: int, message: str = ""):
        self.level = level
        super().__init__(f"level {level} failed: {message}" if message else f"level {level} failed")

class TailStagnation(TruncationError):
    pass


class ConfigError(ConvexPDEError):
    pass

class ParseError(ConfigError):
    pass

class ValidationError(ConfigError):
    pass


class FieldIOError(ConvexPDEError):
    pass

class IOFailure(FieldIOError):
    pass

class SchemaMismatch(FieldIOError):
    pass
