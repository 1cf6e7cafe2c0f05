"""Exception types shared across the package."""


class ObjectBAError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveDepth(ObjectBAError, ArithmeticError):
    """A point lies behind or on the camera plane (z <= 1e-9).

    Also an ArithmeticError so the LM solver can reject a trial step that
    pushes a point behind the camera without depending on this module.
    """


class ShapeMismatch(ObjectBAError):
    """Two feature grids do not share the same H, W, C."""


class MissingMap(ObjectBAError):
    """A (t, t') correspondence map required by the loss is absent."""


class IndexOutOfRange(ObjectBAError):
    """A cell index does not fit the grid it refers to."""


class EmptyProblem(ObjectBAError):
    """A least-squares problem was built with no residuals."""


class NumericalFailure(ObjectBAError):
    """The damped normal equations are unsolvable at maximum damping."""


class DegenerateGeometry(ObjectBAError):
    """All RANSAC samples were rank-deficient."""


class DegenerateBox(ObjectBAError):
    """A 3D box with non-positive size."""


class ConfigError(ObjectBAError):
    """An infeasible or malformed configuration."""


class RecordParseError(ObjectBAError):
    """A structured record file failed to parse.

    Carries the path and 1-based line number for diagnostics.
    """

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
