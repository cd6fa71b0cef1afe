"""Exception types shared across the package."""


class NonConvergence(RuntimeError):
    """An iterative root search or fixed-point loop failed to reach tolerance."""


class DomainError(ValueError):
    """Domain extents or grid geometry outside the supported range."""


class NonPositiveField(ValueError):
    """A field required to be strictly positive dips to zero or below."""


class DegenerateU(ValueError):
    """Streamwise velocity fell below the admissibility floor."""


class AdmissibilityLost(RuntimeError):
    """An iterate left the admissible set (velocity floor, shear ratio, far field)."""


class CrossingDetected(RuntimeError):
    """Two wall characteristics intersect inside the domain."""


class EnvelopeViolation(RuntimeError):
    """Synthesized boundary data exceeds its prescribed decay envelope."""


class InnerDivergence(RuntimeError):
    """The inner coefficient-freezing loop of a slab solve did not contract."""


class PicardStall(RuntimeError):
    """Outer iteration stopped contracting before reaching tolerance."""


class GridMismatch(ValueError):
    """Two objects built on different grids were combined."""


class ParseError(ValueError):
    """Malformed run configuration text."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class VersionMismatch(RuntimeError):
    """Snapshot file magic or version not understood by this build."""


class UnknownQuantity(KeyError):
    """Requested plot quantity is not in the supported set."""
