"""Twisted geodesic flows and attenuated / nonabelian ray transforms on conformal disks."""

from .errors import TwistrayError
from .fields import PolyField
from .fiber_fourier import FiberFunction
from .flow import ExtendedScenario, LambdaField, extend_scenario
from .geometry import ConformalSurface, PhaseState
from .loopfact import MatrixLoop
from .scenario import Numerics, Scenario
from .transport import AttenuationPair, GaugeElement, SourceTerm

__all__ = [
    "AttenuationPair",
    "ConformalSurface",
    "ExtendedScenario",
    "FiberFunction",
    "GaugeElement",
    "LambdaField",
    "MatrixLoop",
    "Numerics",
    "PhaseState",
    "PolyField",
    "Scenario",
    "SourceTerm",
    "TwistrayError",
    "extend_scenario",
]

__version__ = "0.1.0"
