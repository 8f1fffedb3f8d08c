class WeylWalkError(Exception):
    """Base class for every error raised by weylwalk."""


class StructuralError(WeylWalkError):
    """Coin family is malformed (wrong shapes, wrong displacement lengths, empty support)."""


class BranchAmbiguityError(WeylWalkError):
    """The coin sum W has an eigenphase at the branch cut of the principal logarithm."""


class UnsupportedDimensionError(WeylWalkError):
    """The requested analysis only exists for a different internal or spatial dimension."""


class CutoffError(WeylWalkError):
    """Momentum cutoff lies outside the Brillouin zone."""


class BoundRangeError(WeylWalkError):
    """The quadratic norm bound is used outside its range of validity."""


class BoundViolationError(WeylWalkError):
    """A norm inequality that must hold for unitaries failed numerically."""


class PreconditionError(WeylWalkError):
    """Inputs do not satisfy the precondition of an operation."""


class FitUndefinedError(WeylWalkError):
    """A log-log fit was requested on norms that vanish (the walk is exact)."""


class WalkFileError(WeylWalkError):
    """
    A walk definition could not be parsed.

    Attributes:
        code (str): One of 'encoding', 'malformed_json', 'unknown_version',
            'duplicate_q', 'shape_mismatch', 'invalid_field'.
        path (str): Location of the offending field, e.g. 'coins[2].matrix[1]'.
    """

    def __init__(self, code: str, path: str, message: str):
        self.code = code
        self.path = path
        super().__init__(f"[{code}] {path}: {message}")
