"""Exception hierarchy.

Errors that concern a particular phase-space state carry it as ``witness``
so callers (and the CLI report) can name the offending ray.
"""


class TwistrayError(Exception):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class CapReached(TwistrayError):
    """A flow line did not reach the boundary before the time cap."""


class GlancingRay(TwistrayError):
    """A boundary state is (numerically) tangent to the boundary."""


class LeftManifold(TwistrayError):
    """An orbit left the disk before the requested time."""


class OffBoundary(TwistrayError, ValueError):
    """A point that should lie on the boundary circle does not."""


class ExtensionNotConvex(TwistrayError):
    pass


class ExtensionTrapped(TwistrayError):
    pass


class SingularGauge(TwistrayError):
    pass


class DimensionMismatch(TwistrayError, ValueError):
    pass


class BoundaryNonzero(TwistrayError, ValueError):
    pass


class AliasingSuspected(TwistrayError):
    pass


class DegreeViolation(TwistrayError, ValueError):
    pass


class NotPositiveDefinite(TwistrayError, ValueError):
    pass


class NoConvergence(TwistrayError):
    pass


class StepTooLarge(TwistrayError):
    pass


class SchemaError(TwistrayError, ValueError):
    pass


class CertificationFailed(TwistrayError):
    pass
